#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace plumetrace {

/// Row-major 2-D raster indexed (line, sample).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t lines, std::size_t samples, T fill = T{})
      : lines_(lines), samples_(samples), values_(lines * samples, fill) {}

  std::size_t lines() const { return lines_; }
  std::size_t samples() const { return samples_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T& operator()(std::size_t line, std::size_t sample) { return values_[line * samples_ + sample]; }
  const T& operator()(std::size_t line, std::size_t sample) const {
    return values_[line * samples_ + sample];
  }
  T& operator[](std::size_t flat) { return values_[flat]; }
  const T& operator[](std::size_t flat) const { return values_[flat]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  bool same_shape(const auto& other) const {
    return lines_ == other.lines() && samples_ == other.samples();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t lines_ = 0;
  std::size_t samples_ = 0;
  std::vector<T> values_;
};

using Mask = Grid<std::uint8_t>;

/// (line, sample) pixel coordinate.
struct Pixel {
  std::size_t line = 0;
  std::size_t sample = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

}  // namespace plumetrace
