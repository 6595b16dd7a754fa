#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "plumetrace/grid.hpp"

namespace plumetrace {

/// Sentinel written to rasters for nodata pixels. Never appears in memory:
/// readers translate it to the nodata mask and a quiet NaN.
inline constexpr float kNodataSentinel = -9999.0f;

/// Easting / northing (m) of the upper-left corner of the upper-left pixel.
struct GeoOrigin {
  double easting = 0.0;
  double northing = 0.0;
  friend bool operator==(const GeoOrigin&, const GeoOrigin&) = default;
};

struct SensorDescriptor {
  std::string sensor_id = "generic";
  std::vector<double> band_centers_nm;
  std::vector<double> band_fwhm_nm;
  double gsd_m = 30.0;
  // Per-band noise model: variance = noise_a * L + noise_c.
  std::optional<std::vector<double>> noise_a;
  std::optional<std::vector<double>> noise_c;

  std::size_t band_count() const { return band_centers_nm.size(); }
  bool has_noise_model() const { return noise_a.has_value() && noise_c.has_value(); }

  /// Throws DataError when an invariant is broken.
  void validate() const;

  friend bool operator==(const SensorDescriptor&, const SensorDescriptor&) = default;
};

/// Calibrated at-sensor radiance, band-sequential (BSQ) in memory.
class RadianceCube {
 public:
  RadianceCube() = default;
  RadianceCube(SensorDescriptor descriptor, std::size_t lines, std::size_t samples,
               std::vector<double> data, GeoOrigin origin = {}, Mask nodata = {});

  const SensorDescriptor& descriptor() const { return descriptor_; }
  std::size_t bands() const { return descriptor_.band_count(); }
  std::size_t lines() const { return lines_; }
  std::size_t samples() const { return samples_; }
  std::size_t pixel_count() const { return lines_ * samples_; }
  const GeoOrigin& origin() const { return origin_; }
  const Mask& nodata() const { return nodata_; }
  bool is_valid(std::size_t line, std::size_t sample) const { return nodata_(line, sample) == 0; }

  static std::size_t bsq_offset(std::size_t band, std::size_t line, std::size_t sample,
                                std::size_t lines, std::size_t samples) {
    return band * lines * samples + line * samples + sample;
  }

  double at(std::size_t band, std::size_t line, std::size_t sample) const {
    return data_[bsq_offset(band, line, sample, lines_, samples_)];
  }
  double& at(std::size_t band, std::size_t line, std::size_t sample) {
    return data_[bsq_offset(band, line, sample, lines_, samples_)];
  }

  /// Spectrum of one pixel restricted to the given band indices.
  Eigen::VectorXd spectrum(std::size_t line, std::size_t sample,
                           const std::vector<std::size_t>& band_indices) const;

  const std::vector<double>& data() const { return data_; }

  /// Enforces dimension consistency and finiteness of every valid pixel.
  void validate() const;

 private:
  SensorDescriptor descriptor_;
  std::size_t lines_ = 0;
  std::size_t samples_ = 0;
  std::vector<double> data_;
  GeoOrigin origin_;
  Mask nodata_;
};

struct EnhancementField {
  Grid<double> delta_x;  // ppm·m
  std::optional<Grid<double>> sigma_noise;
  std::optional<Grid<double>> sigma_clutter;
  std::optional<Grid<double>> sigma_total;
  double gsd_m = 30.0;
  GeoOrigin origin;
  Mask nodata;
  std::string provenance;

  std::size_t lines() const { return delta_x.lines(); }
  std::size_t samples() const { return delta_x.samples(); }
  bool is_valid(std::size_t line, std::size_t sample) const { return nodata(line, sample) == 0; }

  void validate() const;
};

/// Generic multi-band raster in the canonical on-disk layout. Cubes,
/// enhancement layers and masks all share it.
struct Raster {
  std::size_t bands = 1;
  std::size_t lines = 0;
  std::size_t samples = 0;
  std::vector<float> values;  // BSQ, sentinel kept as written
  double gsd_m = 30.0;
  GeoOrigin origin;
  // Optional / extra header keys, stored verbatim.
  std::map<std::string, std::string> extra;
};

/// Paths of the header/payload pair for a basename: `<base>.hdr`, `<base>.bin`.
/// Passing either file (or the bare basename) is accepted.
std::filesystem::path header_path(const std::filesystem::path& path);
std::filesystem::path payload_path(const std::filesystem::path& path);

Raster read_raster(const std::filesystem::path& path);
void write_raster(const Raster& raster, const std::filesystem::path& path);

RadianceCube read_cube(const std::filesystem::path& path);
void write_cube(const RadianceCube& cube, const std::filesystem::path& path);

/// Single-band grids with nodata sentinel handling.
Grid<double> read_layer(const std::filesystem::path& path, Mask* nodata = nullptr,
                        double* gsd_m = nullptr, GeoOrigin* origin = nullptr);
void write_layer(const Grid<double>& layer, const Mask& nodata, double gsd_m,
                 const GeoOrigin& origin, const std::filesystem::path& path,
                 const std::map<std::string, std::string>& extra = {});

/// Reads an externally produced enhancement raster (and optional uncertainty
/// raster). When `gsd_m` is given it overrides the header value.
EnhancementField ingest_level2(const std::filesystem::path& enhancement_path,
                               const std::optional<std::filesystem::path>& sigma_path,
                               std::optional<double> gsd_m = std::nullopt);

/// Equivalent square pixel size implied by a georeferenced area.
double effective_gsd(double area_m2, std::size_t pixel_count);

/// Shortest round-trip decimal text for a double, always containing a
/// decimal point or exponent (30 -> "30.0").
std::string format_number(double value);

}  // namespace plumetrace
