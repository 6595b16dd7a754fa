#pragma once

#include <cstddef>
#include <vector>

#include "plumetrace/grid.hpp"
#include "plumetrace/scene_io.hpp"
#include "plumetrace/signature.hpp"

namespace plumetrace {

struct BackgroundSelection {
  std::vector<Pixel> pixels;
  std::vector<double> scores;  // spectral angle (rad), parallel to pixels
  std::vector<std::size_t> continuum_bands;
  std::size_t candidate_count = 0;
  bool insufficient = false;
};

struct MatchParams {
  std::size_t n_select = 0;  // 0 = max(500, 5 x plume pixels)
  double buffer_m = 90.0;
  std::size_t min_sample = 100;
};

/// Window bands whose absorption is at most 10% of the window maximum.
std::vector<std::size_t> continuum_bands(const BandAbsorption& absorption);

/// Angle between two spectra after unit-mean normalization (radians).
double spectral_angle(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Selects plume-free pixels whose continuum spectra best match the mean
/// continuum spectrum under the plume. Ties go to (line, sample) order.
BackgroundSelection match_background(const RadianceCube& cube, const Mask& plume_mask,
                                     const BandAbsorption& absorption, const MatchParams& params = {});

/// Robust spread of the enhancement over the selected pixels:
/// 1.4826 * MAD, else the sample standard deviation.
double clutter_sigma(const EnhancementField& field, const BackgroundSelection& selection);

/// sigma_total = sqrt(sigma_noise^2 + sigma_clutter^2) per pixel. A missing
/// component is treated as zero; with no component at all sigma_total is
/// left absent.
void total_sigma(EnhancementField& field);

Grid<double> broadcast(double value, const Mask& nodata);

}  // namespace plumetrace
