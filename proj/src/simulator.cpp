#include "plumetrace/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "plumetrace/errors.hpp"

namespace plumetrace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

SensorDescriptor make_descriptor(double first_nm, double last_nm, double spacing_nm, double fwhm_nm, double gsd_m,
                                 std::optional<double> noise_a, std::optional<double> noise_c) {
  SensorDescriptor d;
  d.sensor_id = "synthetic";
  for (int i = 0;; ++i) {
    const double wl = first_nm + spacing_nm * i;
    if (wl > last_nm + 1e-9) break;
    d.band_centers_nm.push_back(wl);
    d.band_fwhm_nm.push_back(fwhm_nm);
  }
  d.gsd_m = gsd_m;
  if (noise_a || noise_c) {
    d.noise_a = std::vector<double>(d.band_count(), noise_a.value_or(0.0));
    d.noise_c = std::vector<double>(d.band_count(), noise_c.value_or(0.0));
  }
  d.validate();
  return d;
}

std::vector<double> synthetic_endmember(const SensorDescriptor& descriptor, std::size_t kind, double scale) {
  const double slopes[] = {0.25, -0.35, 0.05};
  const double curvature[] = {-0.10, 0.20, 0.02};
  const double brightness[] = {1.0, 0.6, 1.8};
  const std::size_t k = kind % 3;
  const double extra = 0.07 * static_cast<double>(kind / 3);
  std::vector<double> out;
  for (double wl : descriptor.band_centers_nm) {
    const double x = (wl - 2275.0) / 175.0;
    // Smooth solar-like falloff times a low-order reflectance shape.
    const double solar = std::exp(-0.6 * x);
    const double refl = brightness[k] * (1.0 + (slopes[k] + extra) * x + curvature[k] * x * x +
                                         0.03 * std::sin(3.0 * x + static_cast<double>(kind)));
    out.push_back(scale * solar * std::max(refl, 0.05));
  }
  return out;
}

namespace {

std::vector<double> box_blur(const std::vector<double>& in, std::size_t lines, std::size_t samples, int radius) {
  if (radius <= 0) return in;
  std::vector<double> integral((lines + 1) * (samples + 1), 0.0);
  auto idx = [samples](std::size_t l, std::size_t s) { return l * (samples + 1) + s; };
  for (std::size_t l = 0; l < lines; ++l) {
    double row = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
      row += in[l * samples + s];
      integral[idx(l + 1, s + 1)] = integral[idx(l, s + 1)] + row;
    }
  }
  std::vector<double> out(in.size());
  const auto r = static_cast<long>(radius);
  for (long l = 0; l < static_cast<long>(lines); ++l) {
    const auto l0 = static_cast<std::size_t>(std::max(0L, l - r));
    const auto l1 = static_cast<std::size_t>(std::min(static_cast<long>(lines) - 1, l + r));
    for (long s = 0; s < static_cast<long>(samples); ++s) {
      const auto s0 = static_cast<std::size_t>(std::max(0L, s - r));
      const auto s1 = static_cast<std::size_t>(std::min(static_cast<long>(samples) - 1, s + r));
      const double sum = integral[idx(l1 + 1, s1 + 1)] - integral[idx(l0, s1 + 1)] - integral[idx(l1 + 1, s0)] +
                         integral[idx(l0, s0)];
      out[static_cast<std::size_t>(l) * samples + static_cast<std::size_t>(s)] =
          sum / static_cast<double>((l1 - l0 + 1) * (s1 - s0 + 1));
    }
  }
  return out;
}

}  // namespace

RadianceCube synth_background(std::size_t lines, std::size_t samples, const SensorDescriptor& descriptor,
                              const std::vector<std::vector<double>>& endmembers, int mixing_smoothness,
                              std::uint64_t seed, GeoOrigin origin) {
  descriptor.validate();
  if (endmembers.empty()) throw DataError("synth_background: need at least one endmember");
  for (const auto& e : endmembers) {
    if (e.size() != descriptor.band_count()) {
      throw DataError("synth_background: endmember has " + std::to_string(e.size()) + " bands, descriptor has " +
                      std::to_string(descriptor.band_count()));
    }
  }
  const std::size_t n = lines * samples;
  std::vector<std::vector<double>> weights(endmembers.size());
  if (endmembers.size() == 1) {
    weights[0].assign(n, 1.0);
  } else {
    for (std::size_t e = 0; e < endmembers.size(); ++e) {
      std::mt19937_64 rng(derive_seed(seed, e));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> raw(n);
      for (auto& v : raw) v = u(rng);
      weights[e] = box_blur(raw, lines, samples, mixing_smoothness);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (const auto& w : weights) total += w[i];
      for (auto& w : weights) w[i] /= total;
    }
  }
  const std::size_t bands = descriptor.band_count();
  std::vector<double> data(bands * n, 0.0);
  for (std::size_t b = 0; b < bands; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      for (std::size_t e = 0; e < endmembers.size(); ++e) v += weights[e][i] * endmembers[e][b];
      data[b * n + i] = v;
    }
  return RadianceCube(descriptor, lines, samples, std::move(data), origin);
}

Grid<double> plume_truth_map(std::size_t lines, std::size_t samples, double gsd_m, const SyntheticPlumeSpec& spec) {
  Grid<double> out(lines, samples, 0.0);
  if (spec.peak_delta_x == 0.0) return out;
  const double c = std::cos(spec.orientation_rad);
  const double s = std::sin(spec.orientation_rad);
  for (std::size_t l = 0; l < lines; ++l)
    for (std::size_t j = 0; j < samples; ++j) {
      const double dx = (static_cast<double>(j) - spec.center_sample) * gsd_m;
      const double dy = (static_cast<double>(l) - spec.center_line) * gsd_m;
      const double u = dx * c + dy * s;
      const double v = -dx * s + dy * c;
      out(l, j) = spec.peak_delta_x * std::exp(-u * u / (2.0 * spec.sigma_along_m * spec.sigma_along_m) -
                                               v * v / (2.0 * spec.sigma_across_m * spec.sigma_across_m));
    }
  return out;
}

std::pair<RadianceCube, PlumeTruth> inject_plume(const RadianceCube& cube, const BandAbsorption& absorption,
                                                 const SyntheticPlumeSpec& spec, const GasConstants& constants) {
  const double gsd = cube.descriptor().gsd_m;
  PlumeTruth truth;
  truth.spec = spec;
  truth.delta_x = plume_truth_map(cube.lines(), cube.samples(), gsd, spec);

  std::vector<double> data = cube.data();
  const std::size_t plane = cube.pixel_count();
  for (std::size_t i = 0; i < absorption.window_band_indices.size(); ++i) {
    const std::size_t b = absorption.window_band_indices[i];
    const double k = absorption.k_band[i];
    for (std::size_t p = 0; p < plane; ++p) {
      if (cube.nodata()[p] || truth.delta_x[p] == 0.0) continue;
      data[b * plane + p] *= std::exp(-k * truth.delta_x[p]);
    }
  }

  EnhancementField tf;
  tf.delta_x = truth.delta_x;
  tf.gsd_m = gsd;
  tf.origin = cube.origin();
  tf.nodata = Mask(cube.lines(), cube.samples(), 0);
  truth.ime_kg = integrate_ime(tf, Mask(cube.lines(), cube.samples(), 1), constants).ime_kg;

  return {RadianceCube(cube.descriptor(), cube.lines(), cube.samples(), std::move(data), cube.origin(), cube.nodata()),
          std::move(truth)};
}

RadianceCube add_noise(const RadianceCube& cube, std::uint64_t seed) {
  const auto& d = cube.descriptor();
  if (!d.has_noise_model()) throw DomainError("add_noise: descriptor has no noise coefficients");
  std::vector<double> data = cube.data();
  const std::size_t plane = cube.pixel_count();
  for (std::size_t b = 0; b < cube.bands(); ++b) {
    std::mt19937_64 rng(derive_seed(seed, b));
    std::normal_distribution<double> z(0.0, 1.0);
    const double a = (*d.noise_a)[b];
    const double c = (*d.noise_c)[b];
    for (std::size_t p = 0; p < plane; ++p) {
      const double draw = z(rng);
      if (cube.nodata()[p]) continue;
      double& v = data[b * plane + p];
      const double sd = std::sqrt(a * std::max(v, 0.0) + c);
      if (sd > 0.0) v += sd * draw;
    }
  }
  return RadianceCube(d, cube.lines(), cube.samples(), std::move(data), cube.origin(), cube.nodata());
}

RadianceCube apply_column_gain(const RadianceCube& cube, double amplitude, std::uint64_t seed) {
  std::vector<double> data = cube.data();
  const std::size_t plane = cube.pixel_count();
  for (std::size_t b = 0; b < cube.bands(); ++b) {
    std::mt19937_64 rng(derive_seed(seed ^ 0xC01u, b));
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t s = 0; s < cube.samples(); ++s) {
      const double gain = 1.0 + amplitude * z(rng);
      for (std::size_t l = 0; l < cube.lines(); ++l) data[b * plane + l * cube.samples() + s] *= gain;
    }
  }
  return RadianceCube(cube.descriptor(), cube.lines(), cube.samples(), std::move(data), cube.origin(), cube.nodata());
}

}  // namespace plumetrace
