#include "plumetrace/matched_filter.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>

#include "plumetrace/errors.hpp"
#include "plumetrace/robust_stats.hpp"

namespace plumetrace {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Pixel> valid_pixels(const RadianceCube& cube) {
  std::vector<Pixel> out;
  out.reserve(cube.pixel_count());
  for (std::size_t l = 0; l < cube.lines(); ++l)
    for (std::size_t s = 0; s < cube.samples(); ++s)
      if (cube.is_valid(l, s)) out.push_back({l, s});
  return out;
}

std::vector<Pixel> without_excluded(const std::vector<Pixel>& pixels, const Mask* exclude) {
  if (!exclude) return pixels;
  std::vector<Pixel> out;
  out.reserve(pixels.size());
  for (const auto& p : pixels)
    if (!(*exclude)(p.line, p.sample)) out.push_back(p);
  return out;
}

// Finishes a segment once its stats pixels are known.
void fit_segment(const RadianceCube& cube, const MfConfig& config, const BandAbsorption& absorption,
                 const std::vector<std::size_t>& bands, Segment& seg, const Eigen::VectorXd* global_mean) {
  seg.estimate = estimate_stats(cube, seg.stats_pixels, bands, config.shrinkage, config.ridge_floor_scale);
  const Eigen::VectorXd& mu = (config.per_segment_target || !global_mean) ? seg.estimate.mean : *global_mean;
  seg.target = target_spectrum(absorption, std::span<const double>(mu.data(), static_cast<std::size_t>(mu.size())));
  const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(seg.target.t.data(),
                                                              static_cast<Eigen::Index>(seg.target.t.size()));
  seg.filter = MatchedFilter(seg.estimate.mean, seg.estimate.covariance, t);
}

// Membership lists for the configured partition, in raster order.
std::vector<std::vector<Pixel>> partition_members(const RadianceCube& cube, const MfConfig& config,
                                                  const std::vector<std::size_t>& bands) {
  std::vector<std::vector<Pixel>> groups;
  switch (config.variant) {
    case MfVariant::kCmf:
      groups.push_back(valid_pixels(cube));
      break;
    case MfVariant::kCtmf: {
      const Grid<int> labels = cluster_pixels(cube, bands, config.cluster_count, config.seed);
      groups.resize(static_cast<std::size_t>(config.cluster_count));
      for (std::size_t l = 0; l < cube.lines(); ++l)
        for (std::size_t s = 0; s < cube.samples(); ++s)
          if (labels(l, s) >= 0) groups[static_cast<std::size_t>(labels(l, s))].push_back({l, s});
      break;
    }
    case MfVariant::kCwcmf:
      groups.resize(cube.samples());
      for (std::size_t l = 0; l < cube.lines(); ++l)
        for (std::size_t s = 0; s < cube.samples(); ++s)
          if (cube.is_valid(l, s)) groups[s].push_back({l, s});
      break;
  }
  return groups;
}

bool usable(const RadianceCube& cube, const Mask* exclude, std::size_t l, std::size_t s) {
  return cube.is_valid(l, s) && !(exclude && (*exclude)(l, s));
}

std::vector<std::size_t> usable_per_column(const RadianceCube& cube, const Mask* exclude) {
  std::vector<std::size_t> counts(cube.samples(), 0);
  for (std::size_t l = 0; l < cube.lines(); ++l)
    for (std::size_t s = 0; s < cube.samples(); ++s)
      if (usable(cube, exclude, l, s)) ++counts[s];
  return counts;
}

// Smallest symmetric window of columns around `center` holding `needed`
// usable pixels; collected in raster order.
std::vector<Pixel> pooled_columns(const RadianceCube& cube, std::size_t center, std::size_t needed,
                                  const Mask* exclude, const std::vector<std::size_t>& column_count,
                                  bool& pooled) {
  const std::size_t samples = cube.samples();

  std::size_t half = 0;
  std::size_t lo = center;
  std::size_t hi = center;
  std::size_t count = column_count[center];
  while (count < needed && (lo > 0 || hi + 1 < samples)) {
    ++half;
    if (center >= half) count += column_count[lo = center - half];
    if (center + half < samples) count += column_count[hi = center + half];
  }
  pooled = half > 0;
  std::vector<Pixel> out;
  for (std::size_t l = 0; l < cube.lines(); ++l)
    for (std::size_t s = lo; s <= hi; ++s)
      if (usable(cube, exclude, l, s)) out.push_back({l, s});
  return out;
}

}  // namespace

std::string to_string(MfVariant variant) {
  switch (variant) {
    case MfVariant::kCmf: return "CMF";
    case MfVariant::kCtmf: return "CTMF";
    case MfVariant::kCwcmf: return "CWCMF";
  }
  return "?";
}

MfVariant parse_variant(const std::string& text) {
  std::string key;
  for (char c : text)
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "cmf") return MfVariant::kCmf;
  if (key == "ctmf") return MfVariant::kCtmf;
  if (key == "cwcmf") return MfVariant::kCwcmf;
  throw ConfigError("unknown matched-filter variant '" + text + "' (expected CMF, CTMF or CWCMF)");
}

void MfConfig::validate() const {
  if (cluster_count < 1) throw ConfigError("mf.cluster_count must be >= 1");
  if (!(shrinkage >= 0.0 && shrinkage < 1.0)) throw ConfigError("mf.shrinkage must be in [0, 1)");
  if (!(ridge_floor_scale >= 0.0)) throw ConfigError("mf.ridge_floor_scale must be >= 0");
  if (contamination_iterations < 0) throw ConfigError("mf.contamination_iterations must be >= 0");
  if (!(contamination_n_sigma > 0.0)) throw ConfigError("mf.contamination_n_sigma must be > 0");
  if (!(window.low_nm < window.high_nm)) throw ConfigError("mf.window must satisfy low < high");
}

std::string MfConfig::describe() const {
  std::string out = to_string(variant) + "(";
  if (variant == MfVariant::kCtmf) out += "K=" + std::to_string(cluster_count) + ",";
  out += "gamma=" + format_number(shrinkage) + ",iter=" + std::to_string(contamination_iterations) +
         ",window=" + format_number(window.low_nm) + "-" + format_number(window.high_nm) +
         ",seed=" + std::to_string(seed) + (per_segment_target ? "" : ",global_target") + ")";
  return out;
}

CovarianceEstimate estimate_stats(const RadianceCube& cube, std::span<const Pixel> pixels,
                                  const std::vector<std::size_t>& bands, double shrinkage,
                                  double ridge_floor_scale) {
  const std::size_t n = pixels.size();
  if (n < 2) throw DomainError("estimate_stats: need at least 2 pixels, got " + std::to_string(n));
  const auto p = static_cast<Eigen::Index>(bands.size());

  Eigen::MatrixXd centered(p, static_cast<Eigen::Index>(n));
  const Eigen::VectorXd shift = cube.spectrum(pixels[0].line, pixels[0].sample, bands);
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(p);
  for (std::size_t i = 0; i < n; ++i) {
    centered.col(static_cast<Eigen::Index>(i)) = cube.spectrum(pixels[i].line, pixels[i].sample, bands) - shift;
    offset += centered.col(static_cast<Eigen::Index>(i));
  }
  offset /= static_cast<double>(n);
  // Shifted mean: exact when every pixel is identical.
  CovarianceEstimate est;
  est.mean = shift + offset;
  est.count = n;
  centered.colwise() -= offset;
  est.sample_covariance = (centered * centered.transpose()) / static_cast<double>(n);
  est.sample_covariance = 0.5 * (est.sample_covariance + est.sample_covariance.transpose()).eval();

  const double mean_trace = est.sample_covariance.trace() / static_cast<double>(p);
  const double floor = ridge_floor_scale * (mean_trace + 1.0);
  const double ridge = std::max(shrinkage * mean_trace, floor);
  est.covariance = (1.0 - shrinkage) * est.sample_covariance;
  est.covariance.diagonal().array() += ridge;
  return est;
}

MatchedFilter::MatchedFilter(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance, Eigen::VectorXd target)
    : mean_(std::move(mean)), target_(std::move(target)) {
  if (target_.size() != mean_.size() || covariance.rows() != mean_.size() || covariance.cols() != mean_.size()) {
    throw DataError("matched filter: inconsistent dimensions");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw NumericalError("matched filter: covariance is not positive definite");
  if (target_.isZero(0.0)) throw DomainError("degenerate target spectrum");
  whitened_ = llt.solve(target_);
  normalizer_ = target_.dot(whitened_);
  if (!(normalizer_ > 0.0) || !std::isfinite(normalizer_)) throw DomainError("degenerate target spectrum");
  weights_ = whitened_ / normalizer_;
}

double MatchedFilter::noise_variance(const Eigen::VectorXd& noise_diagonal) const {
  const double v = whitened_.array().square().matrix().dot(noise_diagonal) / (normalizer_ * normalizer_);
  if (v < 0.0 || !std::isfinite(v)) throw NumericalError("noise propagation produced a negative variance");
  return v;
}

std::vector<int> kmeans(const Eigen::MatrixXd& features, int k, std::uint64_t seed, int max_iterations) {
  const Eigen::Index n = features.cols();
  if (k < 1) throw DomainError("kmeans: k must be >= 1");
  if (n < k) throw DomainError("kmeans: " + std::to_string(n) + " observations for " + std::to_string(k) + " clusters");
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  if (k == 1) return labels;

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centers(features.rows(), k);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.col(0) = features.col(pick(rng));
  Eigen::VectorXd d2 = (features.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      const double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > r && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    centers.col(c) = features.col(chosen);
    d2 = d2.cwiseMin((features.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
  }

  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (features.col(i) - centers.col(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (features.col(i) - centers.col(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) {
        changed = true;
        labels[static_cast<std::size_t>(i)] = best;
      }
    }
    if (!changed && iter > 0) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(features.rows(), k);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.col(labels[static_cast<std::size_t>(i)]) += features.col(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0) centers.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  return labels;
}

Grid<int> cluster_pixels(const RadianceCube& cube, const std::vector<std::size_t>& window_bands, int k,
                         std::uint64_t seed) {
  const std::vector<Pixel> pixels = valid_pixels(cube);
  if (static_cast<int>(pixels.size()) < k) {
    throw DomainError("cluster_pixels: " + std::to_string(pixels.size()) + " valid pixels for K=" + std::to_string(k));
  }
  Eigen::MatrixXd features(static_cast<Eigen::Index>(window_bands.size()), static_cast<Eigen::Index>(pixels.size()));
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    Eigen::VectorXd x = cube.spectrum(pixels[i].line, pixels[i].sample, window_bands);
    const double m = x.mean();
    if (std::abs(m) > 1e-300) x /= m;
    features.col(static_cast<Eigen::Index>(i)) = x;
  }
  const std::vector<int> labels = kmeans(features, k, seed);
  Grid<int> out(cube.lines(), cube.samples(), -1);
  for (std::size_t i = 0; i < pixels.size(); ++i) out(pixels[i].line, pixels[i].sample) = labels[i];
  return out;
}

BackgroundStats estimate_background(const RadianceCube& cube, const MfConfig& config,
                                    const BandAbsorption& absorption, const Mask* exclude,
                                    const BackgroundStats* previous) {
  config.validate();
  BackgroundStats stats;
  stats.partition = config.variant;
  stats.window_bands = absorption.window_band_indices;
  const auto& bands = stats.window_bands;
  const std::size_t needed = bands.size() + 1;

  std::vector<std::vector<Pixel>> groups;
  if (previous) {
    for (const auto& seg : previous->segments) groups.push_back(seg.members);
  } else {
    groups = partition_members(cube, config, bands);
  }

  const std::vector<Pixel> scene_pixels = without_excluded(valid_pixels(cube), exclude);
  std::optional<Eigen::VectorXd> global_mean;
  if (!config.per_segment_target && scene_pixels.size() >= 2) {
    global_mean = estimate_stats(cube, scene_pixels, bands, config.shrinkage, config.ridge_floor_scale).mean;
  }

  std::vector<std::size_t> column_count;
  if (config.variant == MfVariant::kCwcmf) column_count = usable_per_column(cube, exclude);

  stats.segment_of_pixel = Grid<int>(cube.lines(), cube.samples(), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) continue;
    Segment seg;
    seg.members = groups[g];
    if (config.variant == MfVariant::kCwcmf) {
      seg.stats_pixels = pooled_columns(cube, groups[g].front().sample, needed, exclude, column_count, seg.pooled);
    } else {
      seg.stats_pixels = without_excluded(groups[g], exclude);
      if (config.variant == MfVariant::kCtmf && seg.stats_pixels.size() < needed) {
        seg.stats_pixels = scene_pixels;
        seg.pooled = true;
        stats.warnings.push_back("cluster " + std::to_string(g) + " pooled to scene statistics");
      }
    }
    if (seg.stats_pixels.size() < 2) {
      const Segment* fallback = nullptr;
      if (previous)
        for (const auto& ps : previous->segments)
          if (!ps.members.empty() && ps.members.front() == seg.members.front()) fallback = &ps;
      if (!fallback) throw DomainError("segment " + std::to_string(g) + " has fewer than 2 background pixels");
      stats.warnings.push_back("segment " + std::to_string(g) + " emptied by exclusion; kept previous statistics");
      seg = *fallback;
    } else {
      fit_segment(cube, config, absorption, bands, seg, global_mean ? &*global_mean : nullptr);
    }
    if (seg.stats_pixels.size() < needed && config.variant == MfVariant::kCmf) {
      stats.warnings.push_back("scene statistics from fewer pixels than bands + 1");
    }
    const int id = static_cast<int>(stats.segments.size());
    for (const auto& p : seg.members) stats.segment_of_pixel(p.line, p.sample) = id;
    stats.segments.push_back(std::move(seg));
  }
  if (stats.segments.empty()) throw DomainError("no valid pixels to estimate background statistics");
  return stats;
}

Grid<double> apply_filter(const RadianceCube& cube, const BackgroundStats& stats) {
  Grid<double> dx(cube.lines(), cube.samples(), kNaN);
  for (const auto& seg : stats.segments)
    for (const auto& p : seg.members) dx(p.line, p.sample) = seg.filter.apply(cube.spectrum(p.line, p.sample, stats.window_bands));
  return dx;
}

namespace {

EnhancementField make_field(const RadianceCube& cube, Grid<double> dx, const MfConfig& config,
                            const BackgroundStats& stats) {
  EnhancementField field;
  field.delta_x = std::move(dx);
  field.gsd_m = cube.descriptor().gsd_m;
  field.origin = cube.origin();
  field.nodata = cube.nodata();
  field.provenance = config.describe();
  for (const auto& w : stats.warnings) field.provenance += "; " + w;
  return field;
}

}  // namespace

MfResult apply_mf(const RadianceCube& cube, const MfConfig& config, const BandAbsorption& absorption) {
  MfResult out;
  out.stats = estimate_background(cube, config, absorption);
  out.field = make_field(cube, apply_filter(cube, out.stats), config, out.stats);
  return out;
}

BackgroundStats decontaminate(const RadianceCube& cube, const MfConfig& config, const BandAbsorption& absorption,
                              const Grid<double>& delta_x, const BackgroundStats& initial) {
  BackgroundStats stats = initial;
  Grid<double> dx = delta_x;
  for (int iter = 0; iter < config.contamination_iterations; ++iter) {
    if (iter > 0) dx = apply_filter(cube, stats);
    Mask exclude(cube.lines(), cube.samples(), 0);
    std::size_t excluded = 0;
    for (const auto& seg : stats.segments) {
      std::vector<double> values;
      values.reserve(seg.members.size());
      for (const auto& p : seg.members) values.push_back(dx(p.line, p.sample));
      const double tau = median(values) + config.contamination_n_sigma * robust_sigma(values);
      for (const auto& p : seg.members)
        if (dx(p.line, p.sample) > tau) {
          exclude(p.line, p.sample) = 1;
          ++excluded;
        }
    }
    if (excluded == 0) break;
    // Fallbacks refer to the uncontaminated statistics.
    BackgroundStats next = estimate_background(cube, config, absorption, &exclude, &initial);
    next.warnings.insert(next.warnings.begin(), initial.warnings.begin(), initial.warnings.end());
    std::sort(next.warnings.begin(), next.warnings.end());
    next.warnings.erase(std::unique(next.warnings.begin(), next.warnings.end()), next.warnings.end());
    stats = std::move(next);
  }
  return stats;
}

Grid<double> propagate_noise(const BackgroundStats& stats, const RadianceCube& cube) {
  const auto& d = cube.descriptor();
  Grid<double> sigma(cube.lines(), cube.samples(), kNaN);
  const bool model = d.has_noise_model();
  const auto& bands = stats.window_bands;
  for (const auto& seg : stats.segments) {
    if (!model) {
      const double s = std::sqrt(seg.filter.fallback_variance());
      for (const auto& p : seg.members) sigma(p.line, p.sample) = s;
      continue;
    }
    Eigen::VectorXd cn(static_cast<Eigen::Index>(bands.size()));
    for (const auto& p : seg.members) {
      for (std::size_t i = 0; i < bands.size(); ++i) {
        const std::size_t b = bands[i];
        cn[static_cast<Eigen::Index>(i)] = (*d.noise_a)[b] * std::max(cube.at(b, p.line, p.sample), 0.0) + (*d.noise_c)[b];
      }
      sigma(p.line, p.sample) = std::sqrt(seg.filter.noise_variance(cn));
    }
  }
  return sigma;
}

MfResult retrieve(const RadianceCube& cube, const MfConfig& config, const BandAbsorption& absorption) {
  MfResult first = apply_mf(cube, config, absorption);
  MfResult out;
  out.stats = decontaminate(cube, config, absorption, first.field.delta_x, first.stats);
  out.field = make_field(cube, apply_filter(cube, out.stats), config, out.stats);
  out.field.sigma_noise = propagate_noise(out.stats, cube);
  if (!cube.descriptor().has_noise_model()) out.field.provenance += "; sigma_noise from background covariance (no noise model)";
  return out;
}

}  // namespace plumetrace
