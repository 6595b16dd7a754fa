#include "plumetrace/config.hpp"

#include <fstream>
#include <set>

#include "plumetrace/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace plumetrace {

namespace {

constexpr const char* kBuiltinTable = "builtin:synthetic";

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items()) {
    if (!ok.count(k)) throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

template <typename T>
void read_optional(const json& obj, const char* key, const std::string& where, std::optional<T>& out) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T v{};
  read(obj, key, where, v);
  out = v;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

MfConfig mf_from_json(const json& j, const std::string& where, std::uint64_t run_seed) {
  check_keys(j, where, {"variant", "cluster_count", "shrinkage", "ridge_floor_scale", "contamination_iterations",
                        "contamination_n_sigma", "window_nm", "seed", "per_segment_target"});
  MfConfig mf;
  if (j.contains("variant")) mf.variant = parse_variant(j.at("variant").get<std::string>());
  read(j, "cluster_count", where, mf.cluster_count);
  read(j, "shrinkage", where, mf.shrinkage);
  read(j, "ridge_floor_scale", where, mf.ridge_floor_scale);
  read(j, "contamination_iterations", where, mf.contamination_iterations);
  read(j, "contamination_n_sigma", where, mf.contamination_n_sigma);
  read(j, "per_segment_target", where, mf.per_segment_target);
  mf.seed = run_seed;
  read(j, "seed", where, mf.seed);
  if (j.contains("window_nm")) {
    const auto& w = j.at("window_nm");
    if (!w.is_array() || w.size() != 2) throw ConfigError("config key '" + where + ".window_nm' must be [low, high]");
    mf.window = {w[0].get<double>(), w[1].get<double>()};
  }
  return mf;
}

json mf_to_json(const MfConfig& mf) {
  return {{"variant", to_string(mf.variant)},
          {"cluster_count", mf.cluster_count},
          {"shrinkage", mf.shrinkage},
          {"ridge_floor_scale", mf.ridge_floor_scale},
          {"contamination_iterations", mf.contamination_iterations},
          {"contamination_n_sigma", mf.contamination_n_sigma},
          {"window_nm", {mf.window.low_nm, mf.window.high_nm}},
          {"seed", mf.seed},
          {"per_segment_target", mf.per_segment_target}};
}

json optional_path(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

}  // namespace

void RunConfig::validate(bool check_files) const {
  if (mf.empty()) throw ConfigError("config 'mf' must list at least one matched-filter configuration");
  for (const auto& m : mf) m.validate();
  segmentation.validate();
  wind.validate();
  constants.validate();
  if (!(background.buffer_m >= 0.0)) throw ConfigError("background.buffer_m must be >= 0");
  if (input.gsd_m && !(*input.gsd_m > 0.0)) throw ConfigError("input.gsd_m must be > 0");
  if (!check_files) return;
  auto must_exist = [](const fs::path& p, const std::string& key) {
    if (p.empty()) throw ConfigError("config key '" + key + "' is required");
    if (!fs::exists(header_path(p)) && !fs::exists(p)) {
      throw ConfigError("config key '" + key + "' references a missing file: " + p.string());
    }
  };
  if (input.mode == InputMode::kCube) {
    must_exist(input.cube, "input.cube");
    if (absorption_table != kBuiltinTable && !fs::exists(absorption_table)) {
      throw ConfigError("config key 'absorption_table' references a missing file: " + absorption_table);
    }
  } else {
    must_exist(input.enhancement, "input.enhancement");
    if (input.sigma) must_exist(*input.sigma, "input.sigma");
    if (input.background_mask) must_exist(*input.background_mask, "input.background_mask");
  }
}

RunConfig config_from_json(const json& doc, const fs::path& base_dir) {
  check_keys(doc, "", {"input", "absorption_table", "mf", "segmentation", "wind", "constants", "background",
                       "output_dir", "seed", "simulation", "quantify"});
  RunConfig cfg;
  read(doc, "seed", "", cfg.seed);

  if (doc.contains("input")) {
    const auto& j = doc.at("input");
    check_keys(j, "input", {"mode", "cube", "enhancement", "sigma", "background_mask", "gsd_m"});
    std::string mode = "cube";
    read(j, "mode", "input", mode);
    if (mode == "cube") cfg.input.mode = InputMode::kCube;
    else if (mode == "level2") cfg.input.mode = InputMode::kLevel2;
    else throw ConfigError("config key 'input.mode' must be 'cube' or 'level2'");
    std::string s;
    read(j, "cube", "input", s);
    cfg.input.cube = resolve(base_dir, s);
    s.clear();
    read(j, "enhancement", "input", s);
    cfg.input.enhancement = resolve(base_dir, s);
    std::optional<std::string> o;
    read_optional(j, "sigma", "input", o);
    if (o) cfg.input.sigma = resolve(base_dir, *o);
    o.reset();
    read_optional(j, "background_mask", "input", o);
    if (o) cfg.input.background_mask = resolve(base_dir, *o);
    read_optional(j, "gsd_m", "input", cfg.input.gsd_m);
  }
  if (doc.contains("absorption_table")) {
    std::string t = doc.at("absorption_table").get<std::string>();
    cfg.absorption_table = t == kBuiltinTable ? t : resolve(base_dir, t).string();
  }
  if (doc.contains("mf")) {
    const auto& j = doc.at("mf");
    cfg.mf.clear();
    if (j.is_array()) {
      for (std::size_t i = 0; i < j.size(); ++i) cfg.mf.push_back(mf_from_json(j[i], "mf[" + std::to_string(i) + "]", cfg.seed));
    } else {
      cfg.mf.push_back(mf_from_json(j, "mf", cfg.seed));
    }
  } else {
    for (auto& m : cfg.mf) m.seed = cfg.seed;
  }
  if (doc.contains("segmentation")) {
    const auto& j = doc.at("segmentation");
    check_keys(j, "segmentation", {"n_sigma", "close_radius_m", "open_radius_m", "min_area_m2", "connectivity"});
    read(j, "n_sigma", "segmentation", cfg.segmentation.n_sigma);
    read(j, "close_radius_m", "segmentation", cfg.segmentation.close_radius_m);
    read(j, "open_radius_m", "segmentation", cfg.segmentation.open_radius_m);
    read(j, "min_area_m2", "segmentation", cfg.segmentation.min_area_m2);
    read(j, "connectivity", "segmentation", cfg.segmentation.connectivity);
  }
  if (doc.contains("wind")) {
    const auto& j = doc.at("wind");
    check_keys(j, "wind", {"u10", "sigma_u10", "beta0", "beta1", "sigma_method"});
    read(j, "u10", "wind", cfg.wind.u10);
    read(j, "sigma_u10", "wind", cfg.wind.sigma_u10);
    read(j, "beta0", "wind", cfg.wind.beta0);
    read(j, "beta1", "wind", cfg.wind.beta1);
    if (j.contains("sigma_method")) cfg.wind.sigma_method = parse_wind_sigma_method(j.at("sigma_method").get<std::string>());
  }
  if (doc.contains("constants")) {
    const auto& j = doc.at("constants");
    check_keys(j, "constants", {"molar_mass", "temperature", "pressure", "gas_constant"});
    read(j, "molar_mass", "constants", cfg.constants.molar_mass);
    read(j, "temperature", "constants", cfg.constants.temperature);
    read(j, "pressure", "constants", cfg.constants.pressure);
    read(j, "gas_constant", "constants", cfg.constants.gas_constant);
  }
  if (doc.contains("background")) {
    const auto& j = doc.at("background");
    check_keys(j, "background", {"n_select", "buffer_m", "min_sample"});
    read(j, "n_select", "background", cfg.background.n_select);
    read(j, "buffer_m", "background", cfg.background.buffer_m);
    read(j, "min_sample", "background", cfg.background.min_sample);
  }
  if (doc.contains("output_dir")) cfg.output_dir = resolve(base_dir, doc.at("output_dir").get<std::string>());
  if (doc.contains("simulation")) {
    const auto& j = doc.at("simulation");
    check_keys(j, "simulation", {"lines", "samples", "first_nm", "last_nm", "spacing_nm", "fwhm_nm", "gsd_m", "noise_a",
                                 "noise_c", "add_noise", "endmember_count", "mixing_smoothness", "radiance_scale",
                                 "column_gain", "plume"});
    auto& s = cfg.simulation;
    read(j, "lines", "simulation", s.lines);
    read(j, "samples", "simulation", s.samples);
    read(j, "first_nm", "simulation", s.first_nm);
    read(j, "last_nm", "simulation", s.last_nm);
    read(j, "spacing_nm", "simulation", s.spacing_nm);
    read(j, "fwhm_nm", "simulation", s.fwhm_nm);
    read(j, "gsd_m", "simulation", s.gsd_m);
    read(j, "noise_a", "simulation", s.noise_a);
    read(j, "noise_c", "simulation", s.noise_c);
    read(j, "add_noise", "simulation", s.add_noise);
    read(j, "endmember_count", "simulation", s.endmember_count);
    read(j, "mixing_smoothness", "simulation", s.mixing_smoothness);
    read(j, "radiance_scale", "simulation", s.radiance_scale);
    read(j, "column_gain", "simulation", s.column_gain);
    if (j.contains("plume")) {
      const auto& p = j.at("plume");
      check_keys(p, "simulation.plume",
                 {"center_line", "center_sample", "peak_delta_x", "sigma_along_m", "sigma_across_m", "orientation_rad"});
      read(p, "center_line", "simulation.plume", s.plume.center_line);
      read(p, "center_sample", "simulation.plume", s.plume.center_sample);
      read(p, "peak_delta_x", "simulation.plume", s.plume.peak_delta_x);
      read(p, "sigma_along_m", "simulation.plume", s.plume.sigma_along_m);
      read(p, "sigma_across_m", "simulation.plume", s.plume.sigma_across_m);
      read(p, "orientation_rad", "simulation.plume", s.plume.orientation_rad);
    }
  }
  if (doc.contains("quantify")) {
    const auto& j = doc.at("quantify");
    check_keys(j, "quantify", {"ime_kg", "sigma_ime_kg", "area_m2"});
    read(j, "ime_kg", "quantify", cfg.quantify.ime_kg);
    read_optional(j, "sigma_ime_kg", "quantify", cfg.quantify.sigma_ime_kg);
    read(j, "area_m2", "quantify", cfg.quantify.area_m2);
  }
  cfg.validate(false);
  return cfg;
}

json config_to_json(const RunConfig& c) {
  json mf = json::array();
  for (const auto& m : c.mf) mf.push_back(mf_to_json(m));
  const auto& s = c.simulation;
  return {
      {"input",
       {{"mode", c.input.mode == InputMode::kCube ? "cube" : "level2"},
        {"cube", c.input.cube.string()},
        {"enhancement", c.input.enhancement.string()},
        {"sigma", optional_path(c.input.sigma)},
        {"background_mask", optional_path(c.input.background_mask)},
        {"gsd_m", c.input.gsd_m ? json(*c.input.gsd_m) : json(nullptr)}}},
      {"absorption_table", c.absorption_table},
      {"mf", mf},
      {"segmentation",
       {{"n_sigma", c.segmentation.n_sigma},
        {"close_radius_m", c.segmentation.close_radius_m},
        {"open_radius_m", c.segmentation.open_radius_m},
        {"min_area_m2", c.segmentation.min_area_m2},
        {"connectivity", c.segmentation.connectivity}}},
      {"wind",
       {{"u10", c.wind.u10},
        {"sigma_u10", c.wind.sigma_u10},
        {"beta0", c.wind.beta0},
        {"beta1", c.wind.beta1},
        {"sigma_method", to_string(c.wind.sigma_method)}}},
      {"constants",
       {{"molar_mass", c.constants.molar_mass},
        {"temperature", c.constants.temperature},
        {"pressure", c.constants.pressure},
        {"gas_constant", c.constants.gas_constant}}},
      {"background",
       {{"n_select", c.background.n_select},
        {"buffer_m", c.background.buffer_m},
        {"min_sample", c.background.min_sample}}},
      {"output_dir", c.output_dir.string()},
      {"seed", c.seed},
      {"simulation",
       {{"lines", s.lines},
        {"samples", s.samples},
        {"first_nm", s.first_nm},
        {"last_nm", s.last_nm},
        {"spacing_nm", s.spacing_nm},
        {"fwhm_nm", s.fwhm_nm},
        {"gsd_m", s.gsd_m},
        {"noise_a", s.noise_a},
        {"noise_c", s.noise_c},
        {"add_noise", s.add_noise},
        {"endmember_count", s.endmember_count},
        {"mixing_smoothness", s.mixing_smoothness},
        {"radiance_scale", s.radiance_scale},
        {"column_gain", s.column_gain},
        {"plume",
         {{"center_line", s.plume.center_line},
          {"center_sample", s.plume.center_sample},
          {"peak_delta_x", s.plume.peak_delta_x},
          {"sigma_along_m", s.plume.sigma_along_m},
          {"sigma_across_m", s.plume.sigma_across_m},
          {"orientation_rad", s.plume.orientation_rad}}}}},
      {"quantify",
       {{"ime_kg", c.quantify.ime_kg},
        {"sigma_ime_kg", c.quantify.sigma_ime_kg ? json(*c.quantify.sigma_ime_kg) : json(nullptr)},
        {"area_m2", c.quantify.area_m2}}},
  };
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

json default_config_json() {
  return config_to_json(RunConfig{});
}

AbsorptionTable load_absorption(const std::string& spec) {
  if (spec == kBuiltinTable) return synthetic_absorption_table();
  return read_absorption_table(spec);
}

}  // namespace plumetrace
