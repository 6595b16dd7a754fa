#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "plumetrace/scene_io.hpp"

namespace plumetrace {

struct SpectralWindow {
  double low_nm = 2100.0;
  double high_nm = 2450.0;
  bool contains(double wavelength_nm) const { return wavelength_nm >= low_nm && wavelength_nm <= high_nm; }
};

/// High-resolution methane absorption per unit enhancement, (ppm·m)^-1.
struct AbsorptionTable {
  std::vector<double> wavelengths_nm;
  std::vector<double> kappa;

  void validate() const;
  /// Linear interpolation; wavelengths outside the table clamp to the ends.
  double interpolate(double wavelength_nm) const;
};

/// Two whitespace-separated columns, `#` starts a comment.
AbsorptionTable read_absorption_table(const std::filesystem::path& path);
void write_absorption_table(const AbsorptionTable& table, const std::filesystem::path& path);

/// Smooth pseudo-absorption curve over 2000-2550 nm at 0.1 nm spacing with a
/// strong band near 2300-2380 nm. Not physical; only internally consistent.
AbsorptionTable synthetic_absorption_table();

/// Band-averaged absorption for the bands whose centers fall in the window.
struct BandAbsorption {
  std::vector<std::size_t> window_band_indices;
  std::vector<double> k_band;  // parallel to window_band_indices
};

/// Gaussian-SRF weighted average of kappa for every band in the window,
/// integrated by the trapezoid rule on the table grid.
BandAbsorption band_absorption(const AbsorptionTable& table, const SensorDescriptor& descriptor,
                               const SpectralWindow& window);

/// Gaussian standard deviation for a full width at half maximum.
double fwhm_to_sigma(double fwhm_nm);

/// First-order radiance perturbation per unit enhancement, t = -k * mu.
struct TargetSpectrum {
  std::vector<std::size_t> window_band_indices;
  std::vector<double> k_band;
  std::vector<double> mu;  // background mean it was built from
  std::vector<double> t;
};

TargetSpectrum target_spectrum(const BandAbsorption& absorption, std::span<const double> mu);

/// Beer-Lambert factor exp(-k_b * delta_x) per band.
std::vector<double> transmittance(std::span<const double> k_band, double delta_x);

}  // namespace plumetrace
