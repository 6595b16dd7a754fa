#include "plumetrace/background_clutter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "plumetrace/errors.hpp"
#include "plumetrace/robust_stats.hpp"
#include "plumetrace/segmentation.hpp"

namespace plumetrace {

std::vector<std::size_t> continuum_bands(const BandAbsorption& absorption) {
  const double kmax = *std::max_element(absorption.k_band.begin(), absorption.k_band.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < absorption.k_band.size(); ++i)
    if (absorption.k_band[i] <= 0.1 * kmax) out.push_back(absorption.window_band_indices[i]);
  if (out.empty()) out = absorption.window_band_indices;
  return out;
}

double spectral_angle(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ua = a / a.mean();
  const Eigen::VectorXd ub = b / b.mean();
  const double na = ua.norm();
  const double nb = ub.norm();
  if (!(na > 0.0) || !(nb > 0.0)) return std::numbers::pi / 2;
  const Eigen::VectorXd da = ua / na;
  const Eigen::VectorXd db = ub / nb;
  // Stable for nearly parallel vectors, unlike acos of the dot product.
  return 2.0 * std::atan2((da - db).norm(), (da + db).norm());
}

BackgroundSelection match_background(const RadianceCube& cube, const Mask& plume_mask, const BandAbsorption& absorption,
                                     const MatchParams& params) {
  if (!plume_mask.same_shape(cube.nodata())) throw DataError("match_background: mask shape mismatch");
  BackgroundSelection sel;
  sel.continuum_bands = continuum_bands(absorption);

  std::size_t plume_pixels = 0;
  Eigen::VectorXd reference = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sel.continuum_bands.size()));
  for (std::size_t l = 0; l < cube.lines(); ++l)
    for (std::size_t s = 0; s < cube.samples(); ++s)
      if (plume_mask(l, s) && cube.is_valid(l, s)) {
        reference += cube.spectrum(l, s, sel.continuum_bands);
        ++plume_pixels;
      }
  if (plume_pixels == 0) throw DomainError("match_background: plume mask is empty");
  reference /= static_cast<double>(plume_pixels);

  const std::size_t n_select = params.n_select > 0 ? params.n_select : std::max<std::size_t>(500, 5 * plume_pixels);
  const Mask excluded = dilate(plume_mask, radius_to_pixels(params.buffer_m, cube.descriptor().gsd_m));

  struct Candidate {
    double score;
    Pixel pixel;
  };
  std::vector<Candidate> candidates;
  for (std::size_t l = 0; l < cube.lines(); ++l)
    for (std::size_t s = 0; s < cube.samples(); ++s)
      if (cube.is_valid(l, s) && !excluded(l, s)) {
        candidates.push_back({spectral_angle(cube.spectrum(l, s, sel.continuum_bands), reference), {l, s}});
      }
  if (candidates.empty()) throw DomainError("match_background: no candidate pixels outside the plume buffer");
  sel.candidate_count = candidates.size();

  const std::size_t take = std::min(n_select, candidates.size());
  auto by_score = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.pixel < b.pixel;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(), by_score);
  for (std::size_t i = 0; i < take; ++i) {
    sel.pixels.push_back(candidates[i].pixel);
    sel.scores.push_back(candidates[i].score);
  }
  sel.insufficient = take < n_select || take < params.min_sample;
  return sel;
}

double clutter_sigma(const EnhancementField& field, const BackgroundSelection& selection) {
  std::vector<double> values;
  values.reserve(selection.pixels.size());
  for (const auto& p : selection.pixels)
    if (field.is_valid(p.line, p.sample)) values.push_back(field.delta_x(p.line, p.sample));
  if (values.empty()) throw DomainError("clutter_sigma: empty background selection");
  return robust_sigma(values);
}

Grid<double> broadcast(double value, const Mask& nodata) {
  Grid<double> out(nodata.lines(), nodata.samples(), value);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (nodata[i]) out[i] = std::numeric_limits<double>::quiet_NaN();
  return out;
}

void total_sigma(EnhancementField& field) {
  if (!field.sigma_noise && !field.sigma_clutter) return;
  Grid<double> total(field.lines(), field.samples(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < total.size(); ++i) {
    if (field.nodata[i]) continue;
    const double n = field.sigma_noise ? (*field.sigma_noise)[i] : 0.0;
    const double c = field.sigma_clutter ? (*field.sigma_clutter)[i] : 0.0;
    total[i] = std::sqrt(n * n + c * c);
  }
  field.sigma_total = std::move(total);
}

}  // namespace plumetrace
