#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "plumetrace/grid.hpp"
#include "plumetrace/scene_io.hpp"
#include "plumetrace/signature.hpp"

namespace plumetrace {

enum class MfVariant { kCmf, kCtmf, kCwcmf };

std::string to_string(MfVariant variant);
/// Accepts "cmf", "ctmf", "cwcmf" (case-insensitive, '-' and '_' ignored).
MfVariant parse_variant(const std::string& text);

struct MfConfig {
  MfVariant variant = MfVariant::kCwcmf;
  int cluster_count = 4;           // CTMF only
  double shrinkage = 0.05;         // gamma in Sigma = (1-gamma) S + delta I
  double ridge_floor_scale = 1e-8; // delta_min = scale * (trace(S)/p + 1)
  int contamination_iterations = 1;
  double contamination_n_sigma = 3.0;
  SpectralWindow window;
  std::uint64_t seed = 0;
  bool per_segment_target = true;  // t rebuilt from each segment's mean

  void validate() const;
  /// Short human-readable tag, e.g. "CTMF(K=4,gamma=0.05)".
  std::string describe() const;
};

/// Mean and regularized covariance of a pixel population.
struct CovarianceEstimate {
  Eigen::VectorXd mean;
  Eigen::MatrixXd sample_covariance;  // divisor N
  Eigen::MatrixXd covariance;         // shrunk + ridge
  std::size_t count = 0;
};

/// Shrinkage-regularized statistics over `pixels` restricted to `bands`.
CovarianceEstimate estimate_stats(const RadianceCube& cube, std::span<const Pixel> pixels,
                                  const std::vector<std::size_t>& bands, double shrinkage = 0.05,
                                  double ridge_floor_scale = 1e-8);

/// Per-segment linear estimator dX = (x - mu)^T Sigma^-1 t / (t^T Sigma^-1 t).
/// The Cholesky factor is computed once at construction.
class MatchedFilter {
 public:
  MatchedFilter() = default;
  MatchedFilter(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance, Eigen::VectorXd target);

  double apply(const Eigen::VectorXd& x) const { return (x - mean_).dot(weights_); }

  /// Sandwich variance t'S^-1 C S^-1 t / (t'S^-1 t)^2 for a diagonal noise covariance C.
  double noise_variance(const Eigen::VectorXd& noise_diagonal) const;
  /// Precision assuming the noise covariance equals the background covariance.
  double fallback_variance() const { return 1.0 / normalizer_; }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& target() const { return target_; }
  /// Sigma^-1 t (unnormalized).
  const Eigen::VectorXd& whitened_target() const { return whitened_; }
  double normalizer() const { return normalizer_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd target_;
  Eigen::VectorXd whitened_;
  Eigen::VectorXd weights_;  // whitened_ / normalizer_
  double normalizer_ = 0.0;
};

struct Segment {
  std::vector<Pixel> members;      // pixels the filter is applied to
  std::vector<Pixel> stats_pixels; // pixels mean/covariance were estimated from
  CovarianceEstimate estimate;
  TargetSpectrum target;
  MatchedFilter filter;
  bool pooled = false;
};

struct BackgroundStats {
  MfVariant partition = MfVariant::kCmf;
  std::vector<std::size_t> window_bands;
  std::vector<Segment> segments;
  Grid<int> segment_of_pixel;  // -1 for nodata
  std::vector<std::string> warnings;
};

/// Deterministic k-means (k-means++ seeding, Lloyd iterations to a fixpoint
/// or 100 rounds). Columns of `features` are observations.
std::vector<int> kmeans(const Eigen::MatrixXd& features, int k, std::uint64_t seed, int max_iterations = 100);

/// k-means over brightness-normalized window spectra. Nodata pixels get -1.
Grid<int> cluster_pixels(const RadianceCube& cube, const std::vector<std::size_t>& window_bands, int k,
                         std::uint64_t seed);

/// Builds segments for the configured partition and estimates their stats.
/// Pixels flagged in `exclude` are left out of the statistics only.
BackgroundStats estimate_background(const RadianceCube& cube, const MfConfig& config,
                                    const BandAbsorption& absorption, const Mask* exclude = nullptr,
                                    const BackgroundStats* previous = nullptr);

/// Applies each segment's filter to its member pixels.
Grid<double> apply_filter(const RadianceCube& cube, const BackgroundStats& stats);

struct MfResult {
  EnhancementField field;
  BackgroundStats stats;
};

/// Single-pass matched filter (no decontamination, no noise layer).
MfResult apply_mf(const RadianceCube& cube, const MfConfig& config, const BandAbsorption& absorption);

/// Re-estimates statistics without pixels whose enhancement exceeds the
/// robust per-segment threshold, config.contamination_iterations times.
BackgroundStats decontaminate(const RadianceCube& cube, const MfConfig& config, const BandAbsorption& absorption,
                              const Grid<double>& delta_x, const BackgroundStats& initial);

/// Per-pixel enhancement precision from the sensor noise model; falls back
/// to 1/(t'S^-1 t) when the descriptor has no noise coefficients.
Grid<double> propagate_noise(const BackgroundStats& stats, const RadianceCube& cube);

/// Full retrieval: stats, decontamination, filter, noise layer.
MfResult retrieve(const RadianceCube& cube, const MfConfig& config, const BandAbsorption& absorption);

}  // namespace plumetrace
