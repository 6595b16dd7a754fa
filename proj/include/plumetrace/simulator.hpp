#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "plumetrace/quantification.hpp"
#include "plumetrace/scene_io.hpp"
#include "plumetrace/signature.hpp"

namespace plumetrace {

/// Rotated anisotropic Gaussian enhancement, specified directly in ppm·m.
struct SyntheticPlumeSpec {
  double center_line = 0.0;    // pixel units, may be fractional
  double center_sample = 0.0;
  double peak_delta_x = 1000.0;
  double sigma_along_m = 90.0;
  double sigma_across_m = 60.0;
  double orientation_rad = 0.0;  // along-axis angle from the sample axis
};

struct PlumeTruth {
  SyntheticPlumeSpec spec;
  Grid<double> delta_x;
  double ime_kg = 0.0;
};

/// 64-bit mix used to derive independent sub-seeds (one per band / endmember).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Regular band grid with constant FWHM; optional constant noise coefficients.
SensorDescriptor make_descriptor(double first_nm, double last_nm, double spacing_nm, double fwhm_nm, double gsd_m,
                                 std::optional<double> noise_a = std::nullopt,
                                 std::optional<double> noise_c = std::nullopt);

/// Smooth, positive radiance-like spectra: index 0 soil-like, 1 vegetation-like,
/// 2 bright; further indices cycle with varied slopes.
std::vector<double> synthetic_endmember(const SensorDescriptor& descriptor, std::size_t kind, double scale = 10.0);

/// Seeded smooth endmember mixture: weights are box-blurred uniform noise
/// (radius = mixing_smoothness px), normalized to unit sum.
RadianceCube synth_background(std::size_t lines, std::size_t samples, const SensorDescriptor& descriptor,
                              const std::vector<std::vector<double>>& endmembers, int mixing_smoothness,
                              std::uint64_t seed, GeoOrigin origin = {});

/// Truth enhancement map for a plume on a lines x samples grid.
Grid<double> plume_truth_map(std::size_t lines, std::size_t samples, double gsd_m, const SyntheticPlumeSpec& spec);

/// Beer-Lambert attenuation of the window bands; IME of the truth map is
/// computed with integrate_ime over the full raster.
std::pair<RadianceCube, PlumeTruth> inject_plume(const RadianceCube& cube, const BandAbsorption& absorption,
                                                 const SyntheticPlumeSpec& spec, const GasConstants& constants = {});

/// Adds zero-mean Gaussian noise with variance a_b * max(L, 0) + c_b.
RadianceCube add_noise(const RadianceCube& cube, std::uint64_t seed);

/// Multiplies every (band, column) by 1 + amplitude * N(0, 1): pushbroom-style striping.
RadianceCube apply_column_gain(const RadianceCube& cube, double amplitude, std::uint64_t seed);

}  // namespace plumetrace
