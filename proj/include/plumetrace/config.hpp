#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "plumetrace/background_clutter.hpp"
#include "plumetrace/matched_filter.hpp"
#include "plumetrace/quantification.hpp"
#include "plumetrace/segmentation.hpp"
#include "plumetrace/simulator.hpp"

namespace plumetrace {

enum class InputMode { kCube, kLevel2 };

struct InputConfig {
  InputMode mode = InputMode::kCube;
  std::filesystem::path cube;
  std::filesystem::path enhancement;
  std::optional<std::filesystem::path> sigma;
  std::optional<std::filesystem::path> background_mask;
  std::optional<double> gsd_m;
};

/// Scene recipe for the `simulate` subcommand.
struct SimulationConfig {
  std::size_t lines = 80;
  std::size_t samples = 80;
  double first_nm = 2000.0;
  double last_nm = 2500.0;
  double spacing_nm = 10.0;
  double fwhm_nm = 10.0;
  double gsd_m = 30.0;
  double noise_a = 0.0;
  double noise_c = 0.0;
  bool add_noise = false;
  std::size_t endmember_count = 1;
  int mixing_smoothness = 8;
  double radiance_scale = 10.0;
  double column_gain = 0.0;
  SyntheticPlumeSpec plume{40.0, 40.0, 800.0, 120.0, 75.0, 0.5};
};

/// Direct inputs for the `quantify` subcommand.
struct QuantifyInputs {
  double ime_kg = 0.0;
  std::optional<double> sigma_ime_kg;
  double area_m2 = 0.0;
};

struct RunConfig {
  InputConfig input;
  std::string absorption_table = "builtin:synthetic";
  std::vector<MfConfig> mf{MfConfig{}};
  SegmentationParams segmentation;
  WindConfig wind;
  GasConstants constants;
  MatchParams background;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  SimulationConfig simulation;
  QuantifyInputs quantify;

  /// Value checks; with check_files, every referenced input must exist
  /// (ConfigError names the offending key).
  void validate(bool check_files) const;
};

RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const RunConfig& config);

/// Parses a JSON file; `//` and `/* */` comments are allowed.
RunConfig load_config(const std::filesystem::path& path);

/// Every default, explicitly.
nlohmann::json default_config_json();

/// Loads the table named by config (a path, or "builtin:synthetic").
AbsorptionTable load_absorption(const std::string& spec);

}  // namespace plumetrace
