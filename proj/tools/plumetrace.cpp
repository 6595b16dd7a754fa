// plumetrace command-line front end.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "plumetrace/errors.hpp"
#include "plumetrace/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace plumetrace;

namespace {

struct Options {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::string mf;
  std::string input;
  std::string sigma;
  bool dump_defaults = false;
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (!o.output.empty()) cfg.output_dir = o.output;
  if (o.seed) {
    cfg.seed = *o.seed;
    for (auto& m : cfg.mf) m.seed = *o.seed;
  }
  if (!o.mf.empty()) {
    const MfVariant v = parse_variant(o.mf);
    for (auto& m : cfg.mf) m.variant = v;
  }
  return cfg;
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << dump_report(j) << "\n";
}

void print_summary(const json& report) {
  auto run_line = [](const json& run) {
    std::printf("%s: %zu plume(s), threshold %.6g ppm m\n",
                run["mf"].is_null() ? "level-2" : run["mf"].get<std::string>().c_str(),
                run["plume_count"].get<std::size_t>(), run["threshold_ppmm"].get<double>());
    for (const auto& p : run["plumes"]) {
      std::printf("  plume %d: area %.0f m2, IME %.2f kg, Q = %.3f +/- %.3f t/h\n", p["label_id"].get<int>(),
                  p["area_m2"].get<double>(), p["ime_kg"].get<double>(), p["flux_t_per_h"].get<double>(),
                  p["sigma_flux_t_per_h"].get<double>());
    }
  };
  if (report.contains("run")) run_line(report["run"]);
  if (report.contains("runs"))
    for (const auto& r : report["runs"]) run_line(r);
  if (report.contains("spreads"))
    for (const auto& s : report["spreads"])
      std::printf("  spread plume %d: min %.3f mean %.3f max %.3f std %.3f t/h over %zu configs\n",
                  s["reference_label"].get<int>(), s["flux_min_t_per_h"].get<double>(),
                  s["flux_mean_t_per_h"].get<double>(), s["flux_max_t_per_h"].get<double>(),
                  s["flux_std_t_per_h"].get<double>(), s["matched_configs"].get<std::size_t>());
}

int cmd_simulate(const Options& o) {
  RunConfig cfg = resolve_config(o);
  const AbsorptionTable table = load_absorption(cfg.absorption_table);
  auto [cube, truth] = simulate_scene(cfg.simulation, table, cfg.mf.front().window, cfg.constants, cfg.seed);
  write_cube(cube, cfg.output_dir / "scene");
  write_layer(truth.delta_x, Mask(cube.lines(), cube.samples(), 0), cube.descriptor().gsd_m, cube.origin(),
              cfg.output_dir / "truth_delta_x");
  write_json(cfg.output_dir / "truth.json",
             {{"ime_true_kg", truth.ime_kg},
              {"u_eff", effective_wind(cfg.wind).u_eff},
              {"seed", cfg.seed},
              {"simulation", config_to_json(cfg)["simulation"]}});
  std::printf("wrote %s (ime_true %.4f kg)\n", (cfg.output_dir / "scene.hdr").string().c_str(), truth.ime_kg);
  return 0;
}

int cmd_retrieve(const Options& o) {
  RunConfig cfg = resolve_config(o);
  if (!o.input.empty()) cfg.input.cube = o.input;
  cfg.input.mode = InputMode::kCube;
  cfg.validate(true);
  const RadianceCube cube = read_cube(cfg.input.cube);
  const AbsorptionTable table = load_absorption(cfg.absorption_table);
  const MfConfig& mf = cfg.mf.front();
  MfResult r = retrieve(cube, mf, band_absorption(table, cube.descriptor(), mf.window));
  quantize(r.field);
  const auto& f = r.field;
  write_layer(f.delta_x, f.nodata, f.gsd_m, f.origin, cfg.output_dir / "enhancement", {{"provenance", f.provenance}});
  write_layer(*f.sigma_noise, f.nodata, f.gsd_m, f.origin, cfg.output_dir / "sigma_noise");
  std::printf("wrote %s (%s)\n", (cfg.output_dir / "enhancement.hdr").string().c_str(), f.provenance.c_str());
  return 0;
}

RunConfig level2_config(const Options& o) {
  RunConfig cfg = resolve_config(o);
  cfg.input.mode = InputMode::kLevel2;
  if (!o.input.empty()) cfg.input.enhancement = o.input;
  if (!o.sigma.empty()) cfg.input.sigma = fs::path(o.sigma);
  return cfg;
}

int cmd_segment(const Options& o) {
  const RunConfig cfg = level2_config(o);
  cfg.validate(true);
  const RunResult r = execute(cfg).front();
  fs::create_directories(cfg.output_dir);
  const auto& f = r.field;
  write_layer(label_raster(r.plumes, f.lines(), f.samples()), f.nodata, f.gsd_m, f.origin, cfg.output_dir / "plume_mask");
  write_json(cfg.output_dir / "plumes.geojson", plumes_geojson(r));
  std::printf("%zu plume(s), threshold %.6g ppm m\n", r.plumes.size(), r.threshold);
  return 0;
}

int cmd_quantify(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const auto& q = cfg.quantify;
  const PlumeRecord rec = quantify_only(q.ime_kg, q.sigma_ime_kg, q.area_m2, cfg.wind);
  const json j = record_to_json(rec);
  if (!o.output.empty()) write_json(cfg.output_dir / "report.json", {{"config", config_to_json(cfg)}, {"plume", j}});
  std::cout << dump_report(j) << "\n";
  return 0;
}

int cmd_pipeline(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  print_summary(cfg.mf.size() > 1 ? run_multi(cfg) : run_pipeline(cfg));
  return 0;
}

int cmd_multi(const Options& o) {
  print_summary(run_multi(resolve_config(o)));
  return 0;
}

int cmd_ingest(const Options& o) {
  print_summary(run_pipeline(level2_config(o)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Methane plume retrieval, segmentation and emission quantification"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration (comments allowed)");
    sub->add_option("--output", o.output, "Output directory (overrides output_dir)");
    sub->add_option("--seed", o.seed, "Seed (overrides config seed and every mf seed)");
    sub->add_option("--mf", o.mf, "Matched-filter variant override: cmf, ctmf, cwcmf");
  };
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic scene with an injected plume");
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Matched-filter retrieval: enhancement + sigma_noise");
  auto* segment = app.add_subcommand("segment", "Threshold and segment an enhancement raster");
  auto* quantify = app.add_subcommand("quantify", "IME -> flux from the config 'quantify' block");
  auto* pipeline = app.add_subcommand("pipeline", "Full chain from the configured input");
  auto* multi = app.add_subcommand("multi", "Full chain per mf entry with cross-config spreads");
  auto* ingest = app.add_subcommand("ingest-l2", "Full chain from an external enhancement raster");
  auto* config = app.add_subcommand("config", "Configuration utilities");
  for (auto* s : {simulate, retrieve_cmd, segment, quantify, pipeline, multi, ingest}) common(s);
  for (auto* s : {retrieve_cmd, segment, ingest}) s->add_option("--input", o.input, "Input raster (overrides config)");
  for (auto* s : {segment, ingest}) s->add_option("--sigma", o.sigma, "Uncertainty raster (sigma_total)");
  config->add_flag("--dump-defaults", o.dump_defaults, "Print every default as a config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*retrieve_cmd) return cmd_retrieve(o);
    if (*segment) return cmd_segment(o);
    if (*quantify) return cmd_quantify(o);
    if (*pipeline) return cmd_pipeline(o);
    if (*multi) return cmd_multi(o);
    if (*ingest) return cmd_ingest(o);
    if (*config) {
      if (!o.dump_defaults) {
        std::cerr << "config: nothing to do (try --dump-defaults)\n";
        return 2;
      }
      std::cout << default_config_json().dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
