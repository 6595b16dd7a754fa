#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "plumetrace/config.hpp"

namespace plumetrace {

/// Where the background sample used for thresholding and clutter came from.
struct BackgroundSummary {
  std::string source;  // "matched", "all_valid", "provided_mask", "plume_free"
  std::size_t count = 0;
  std::size_t candidate_count = 0;
  std::optional<double> sigma_clutter;
  bool insufficient = false;
};

struct RunResult {
  std::string mf_description;  // empty for Level-2 runs
  EnhancementField field;      // float32-quantized layers
  double threshold = 0.0;
  std::vector<PlumeMask> plumes;
  std::vector<PlumeRecord> records;  // parallel to plumes
  Mask background_mask;
  BackgroundSummary background;
  std::vector<std::string> assumptions;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, double>> timings;  // seconds
};

/// Rounds every layer to float32, the precision of the written rasters, so
/// that downstream results do not depend on whether the field came from
/// memory or from disk.
void quantize(EnhancementField& field);

/// Steps 3-5 for a retrieved field: background matching, clutter, sigma_total,
/// segmentation and per-plume quantification.
RunResult downstream_level1(const RadianceCube& cube, const BandAbsorption& absorption, EnhancementField field,
                            const RunConfig& config);

/// Retrieval followed by the Level-1 downstream chain.
RunResult run_level1(const RadianceCube& cube, const AbsorptionTable& table, const MfConfig& mf,
                     const RunConfig& config);

/// Downstream chain for an ingested enhancement field. A provided sigma is
/// taken as sigma_total; `background` (if any) replaces spectral matching.
RunResult run_level2(EnhancementField field, const std::optional<Mask>& background, const RunConfig& config);

/// Writes enhancement, sigma layers, plume_mask, background_mask,
/// plumes.geojson into `dir`.
void write_rasters(const RunResult& result, const std::filesystem::path& dir);

nlohmann::json record_to_json(const PlumeRecord& record);
nlohmann::json plumes_geojson(const RunResult& result);
nlohmann::json run_to_json(const RunResult& result);

/// JSON text with every floating-point number printed to 17 significant digits.
std::string dump_report(const nlohmann::json& report);

double mask_iou(const Mask& a, const Mask& b);

struct PlumeSpread {
  int reference_label = 0;
  std::vector<std::optional<int>> labels;  // per config; [0] is the reference
  std::size_t matched = 0;
  double min_flux = 0.0;
  double mean_flux = 0.0;
  double max_flux = 0.0;
  double std_flux = 0.0;  // population standard deviation
};

struct MultiSummary {
  std::vector<PlumeSpread> spreads;
  std::vector<std::vector<int>> unmatched;  // per config, labels matched to no reference plume
};

inline constexpr double kMatchIou = 0.3;

/// Matches every config's plumes to the first config's plumes (greedy by
/// descending IoU, one-to-one, IoU >= 0.3) and summarizes flux spreads.
MultiSummary match_plumes(const std::vector<RunResult>& runs);

/// Simulated scene from the config recipe.
std::pair<RadianceCube, PlumeTruth> simulate_scene(const SimulationConfig& sim, const AbsorptionTable& table,
                                                   const SpectralWindow& window, const GasConstants& constants,
                                                   std::uint64_t seed);

/// Runs every MF config; results are in config order.
std::vector<RunResult> execute(const RunConfig& config);

/// Full run for the first MF config: writes outputs and report.json into
/// config.output_dir and returns the report (timings under "timings").
nlohmann::json run_pipeline(const RunConfig& config);

/// One subdirectory per MF config plus a top-level report with spreads.
/// Requires at least two MF configs.
nlohmann::json run_multi(const RunConfig& config);

}  // namespace plumetrace
