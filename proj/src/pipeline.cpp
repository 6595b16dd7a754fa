#include "plumetrace/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "plumetrace/errors.hpp"
#include "plumetrace/robust_stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace plumetrace {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void quantize_grid(Grid<double>& g) {
  for (auto& v : g.values())
    if (std::isfinite(v)) v = static_cast<double>(static_cast<float>(v));
}

Mask valid_mask(const EnhancementField& field) {
  Mask m(field.lines(), field.samples(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = field.nodata[i] ? 0 : 1;
  return m;
}

// Raster-order gather, so the statistics do not depend on how the sample was built.
std::vector<double> values_in(const EnhancementField& field, const Mask& mask) {
  std::vector<double> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i] && !field.nodata[i]) out.push_back(field.delta_x[i]);
  return out;
}

Mask union_mask(const std::vector<PlumeMask>& plumes, std::size_t lines, std::size_t samples) {
  Mask u(lines, samples, 0);
  for (const auto& p : plumes)
    for (std::size_t i = 0; i < u.size(); ++i)
      if (p.mask[i]) u[i] = 1;
  return u;
}

Mask selection_mask(const BackgroundSelection& sel, std::size_t lines, std::size_t samples) {
  Mask m(lines, samples, 0);
  for (const auto& p : sel.pixels) m(p.line, p.sample) = 1;
  return m;
}

std::size_t count_set(const Mask& m) { return static_cast<std::size_t>(std::count(m.values().begin(), m.values().end(), 1)); }

void add_unique(std::vector<std::string>& list, const std::string& s) {
  if (std::find(list.begin(), list.end(), s) == list.end()) list.push_back(s);
}

void collect_assumptions(RunResult& r) {
  for (const auto& rec : r.records)
    for (const auto& a : rec.assumptions) add_unique(r.assumptions, a);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void append_number(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  out += s;
}

void emit(const json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(k).dump() + ": ";
        emit(v, out, indent + 2);
      }
      out += "\n" + close + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        emit(j[i], out, indent + 2);
      }
      out += "\n" + close + "]";
      return;
    }
    case json::value_t::number_float:
      append_number(out, j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

json timings_json(const RunResult& r) {
  json t = json::object();
  for (const auto& [k, v] : r.timings) t[k] = v;
  return t;
}

}  // namespace

void quantize(EnhancementField& field) {
  quantize_grid(field.delta_x);
  if (field.sigma_noise) quantize_grid(*field.sigma_noise);
  if (field.sigma_clutter) quantize_grid(*field.sigma_clutter);
  if (field.sigma_total) quantize_grid(*field.sigma_total);
}

RunResult downstream_level1(const RadianceCube& cube, const BandAbsorption& absorption, EnhancementField field,
                            const RunConfig& config) {
  RunResult r;
  r.field = std::move(field);
  quantize(r.field);
  const std::size_t lines = r.field.lines();
  const std::size_t samples = r.field.samples();
  const Mask valid = valid_mask(r.field);
  if (count_set(valid) == 0) throw DataError("enhancement field has no valid pixels");

  auto start = Clock::now();
  // A provisional segmentation against all valid pixels locates the plume
  // footprint that the background is then matched to.
  const double tau0 = robust_threshold(values_in(r.field, valid), config.segmentation.n_sigma);
  const auto provisional = segment_field(r.field, tau0, config.segmentation);
  r.background.source = "all_valid";
  r.background_mask = valid;
  if (!provisional.empty()) {
    try {
      const auto sel = match_background(cube, union_mask(provisional, lines, samples), absorption, config.background);
      r.background_mask = selection_mask(sel, lines, samples);
      r.background.source = "matched";
      r.background.candidate_count = sel.candidate_count;
      r.background.insufficient = sel.insufficient;
    } catch (const DomainError& e) {
      r.warnings.push_back(std::string("background matching fell back to all valid pixels: ") + e.what());
    }
  }
  if (r.background.source == "all_valid") r.background.candidate_count = count_set(valid);
  r.background.count = count_set(r.background_mask);
  const auto bg_values = values_in(r.field, r.background_mask);
  const double scene_clutter = robust_sigma(bg_values);
  r.background.sigma_clutter = scene_clutter;
  r.timings.emplace_back("background", seconds_since(start));

  start = Clock::now();
  r.threshold = robust_threshold(bg_values, config.segmentation.n_sigma);
  r.plumes = segment_field(r.field, r.threshold, config.segmentation);
  r.timings.emplace_back("segmentation", seconds_since(start));

  start = Clock::now();
  Grid<double> clutter = broadcast(scene_clutter, r.field.nodata);
  std::vector<double> plume_clutter(r.plumes.size(), scene_clutter);
  std::vector<bool> plume_insufficient(r.plumes.size(), false);
  for (std::size_t i = 0; i < r.plumes.size(); ++i) {
    try {
      const auto sel = match_background(cube, r.plumes[i].mask, absorption, config.background);
      plume_clutter[i] = clutter_sigma(r.field, sel);
      plume_insufficient[i] = sel.insufficient;
    } catch (const DomainError& e) {
      r.warnings.push_back("plume " + std::to_string(r.plumes[i].label_id) +
                           ": scene clutter used, matching failed: " + e.what());
    }
    for (std::size_t k = 0; k < clutter.size(); ++k)
      if (r.plumes[i].mask[k]) clutter[k] = plume_clutter[i];
  }
  r.field.sigma_clutter = std::move(clutter);
  total_sigma(r.field);
  quantize(r.field);

  for (std::size_t i = 0; i < r.plumes.size(); ++i) {
    PlumeRecord rec = quantify_plume(r.field, r.plumes[i], config.wind, config.constants);
    rec.sigma_clutter = plume_clutter[i];
    rec.assumptions.push_back("sigma_clutter_per_plume_scalar");
    if (plume_insufficient[i]) rec.assumptions.push_back("background_selection_insufficient");
    r.records.push_back(std::move(rec));
  }
  if (!cube.descriptor().has_noise_model()) add_unique(r.assumptions, "sigma_noise_from_background_covariance");
  collect_assumptions(r);
  r.timings.emplace_back("quantification", seconds_since(start));
  return r;
}

RunResult run_level1(const RadianceCube& cube, const AbsorptionTable& table, const MfConfig& mf,
                     const RunConfig& config) {
  auto start = Clock::now();
  const BandAbsorption absorption = band_absorption(table, cube.descriptor(), mf.window);
  MfResult retrieved = retrieve(cube, mf, absorption);
  const double t_retrieve = seconds_since(start);
  RunResult r = downstream_level1(cube, absorption, std::move(retrieved.field), config);
  r.mf_description = mf.describe();
  for (const auto& w : retrieved.stats.warnings) r.warnings.push_back(w);
  r.timings.insert(r.timings.begin(), {"retrieval", t_retrieve});
  return r;
}

RunResult run_level2(EnhancementField field, const std::optional<Mask>& background, const RunConfig& config) {
  RunResult r;
  r.field = std::move(field);
  quantize(r.field);
  const std::size_t lines = r.field.lines();
  const std::size_t samples = r.field.samples();
  const Mask valid = valid_mask(r.field);
  if (count_set(valid) == 0) throw DataError("enhancement field has no valid pixels");

  auto start = Clock::now();
  r.background_mask = valid;
  r.background.source = "all_valid";
  if (background) {
    if (!background->same_shape(valid)) throw DataError("background mask shape does not match the enhancement raster");
    Mask m(lines, samples, 0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = ((*background)[i] && valid[i]) ? 1 : 0;
    if (count_set(m) > 0) {
      r.background_mask = std::move(m);
      r.background.source = "provided_mask";
    } else {
      r.warnings.push_back("provided background mask selects no valid pixel; using all valid pixels");
    }
  } else {
    // No spectra to match on: plume-free pixels outside the buffered provisional plumes.
    const double tau0 = robust_threshold(values_in(r.field, valid), config.segmentation.n_sigma);
    const auto provisional = segment_field(r.field, tau0, config.segmentation);
    if (!provisional.empty()) {
      const Mask excluded = dilate(union_mask(provisional, lines, samples),
                                   radius_to_pixels(config.background.buffer_m, r.field.gsd_m));
      Mask m(lines, samples, 0);
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = (valid[i] && !excluded[i]) ? 1 : 0;
      if (count_set(m) > 0) {
        r.background_mask = std::move(m);
        r.background.source = "plume_free";
      }
    }
  }
  r.background.count = count_set(r.background_mask);
  r.background.candidate_count = r.background.count;
  r.background.insufficient = r.background.count < config.background.min_sample;
  const auto bg_values = values_in(r.field, r.background_mask);
  const double scene_clutter = robust_sigma(bg_values);
  r.background.sigma_clutter = scene_clutter;
  r.timings.emplace_back("background", seconds_since(start));

  start = Clock::now();
  r.threshold = robust_threshold(bg_values, config.segmentation.n_sigma);
  r.plumes = segment_field(r.field, r.threshold, config.segmentation);
  r.timings.emplace_back("segmentation", seconds_since(start));

  start = Clock::now();
  const bool sigma_given = r.field.sigma_total.has_value();
  if (!sigma_given) {
    r.field.sigma_clutter = broadcast(scene_clutter, r.field.nodata);
    total_sigma(r.field);
    quantize(r.field);
  }
  for (const auto& plume : r.plumes) {
    PlumeRecord rec = quantify_plume(r.field, plume, config.wind, config.constants);
    if (sigma_given) {
      rec.assumptions.push_back("sigma_total_from_input");
    } else {
      rec.sigma_clutter = scene_clutter;
      rec.assumptions.push_back("sigma_noise_unavailable:sigma_total_is_clutter_only");
    }
    if (r.background.insufficient) rec.assumptions.push_back("background_selection_insufficient");
    r.records.push_back(std::move(rec));
  }
  collect_assumptions(r);
  r.timings.emplace_back("quantification", seconds_since(start));
  return r;
}

void write_rasters(const RunResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& f = r.field;
  const std::map<std::string, std::string> prov{{"provenance", f.provenance}};
  write_layer(f.delta_x, f.nodata, f.gsd_m, f.origin, dir / "enhancement", prov);
  if (f.sigma_noise) write_layer(*f.sigma_noise, f.nodata, f.gsd_m, f.origin, dir / "sigma_noise");
  if (f.sigma_clutter) write_layer(*f.sigma_clutter, f.nodata, f.gsd_m, f.origin, dir / "sigma_clutter");
  if (f.sigma_total) write_layer(*f.sigma_total, f.nodata, f.gsd_m, f.origin, dir / "sigma_total");
  write_layer(label_raster(r.plumes, f.lines(), f.samples()), f.nodata, f.gsd_m, f.origin, dir / "plume_mask");
  Grid<double> bg(f.lines(), f.samples(), 0.0);
  for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = r.background_mask[i];
  write_layer(bg, f.nodata, f.gsd_m, f.origin, dir / "background_mask");
  write_text(dir / "plumes.geojson", dump_report(plumes_geojson(r)));
}

json record_to_json(const PlumeRecord& rec) {
  return {{"label_id", rec.label_id},
          {"pixel_count", rec.pixel_count},
          {"area_m2", rec.area_m2},
          {"ime_kg", rec.ime_kg},
          {"sigma_ime_kg", opt(rec.sigma_ime_kg)},
          {"length_m", rec.length_m},
          {"u_eff", rec.u_eff},
          {"sigma_u_eff", rec.sigma_u_eff},
          {"flux_kg_per_s", rec.flux_kg_per_s},
          {"flux_t_per_h", rec.flux_t_per_h},
          {"sigma_flux_t_per_h", rec.sigma_flux_t_per_h},
          {"sigma_flux_wind", rec.sigma_flux_wind},
          {"sigma_flux_ime", opt(rec.sigma_flux_ime)},
          {"sigma_clutter", opt(rec.sigma_clutter)},
          {"assumptions", rec.assumptions}};
}

json plumes_geojson(const RunResult& r) {
  json features = json::array();
  for (std::size_t i = 0; i < r.plumes.size(); ++i) {
    const auto& p = r.plumes[i];
    json rings = json::array();
    for (const auto& ring : p.polygon) {
      json coords = json::array();
      for (const auto& v : ring) coords.push_back({v.easting, v.northing});
      rings.push_back(std::move(coords));
    }
    json props = {{"label_id", p.label_id},
                  {"pixel_count", p.pixel_count},
                  {"area_m2", p.area_m2},
                  {"touches_edge", p.touches_edge}};
    if (i < r.records.size()) {
      props["flux_t_per_h"] = r.records[i].flux_t_per_h;
      props["ime_kg"] = r.records[i].ime_kg;
    }
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", std::move(rings)}}},
                        {"properties", std::move(props)}});
  }
  return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

json run_to_json(const RunResult& r) {
  json plumes = json::array();
  for (const auto& rec : r.records) plumes.push_back(record_to_json(rec));
  return {{"mf", r.mf_description.empty() ? json(nullptr) : json(r.mf_description)},
          {"provenance", r.field.provenance},
          {"gsd_m", r.field.gsd_m},
          {"lines", r.field.lines()},
          {"samples", r.field.samples()},
          {"threshold_ppmm", r.threshold},
          {"plume_count", r.records.size()},
          {"plumes", std::move(plumes)},
          {"background",
           {{"source", r.background.source},
            {"count", r.background.count},
            {"candidate_count", r.background.candidate_count},
            {"sigma_clutter", opt(r.background.sigma_clutter)},
            {"insufficient", r.background.insufficient}}},
          {"assumptions", r.assumptions},
          {"warnings", r.warnings}};
}

std::string dump_report(const json& report) {
  std::string out;
  emit(report, out, 0);
  return out;
}

double mask_iou(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw DataError("mask_iou: shape mismatch");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MultiSummary match_plumes(const std::vector<RunResult>& runs) {
  MultiSummary out;
  if (runs.empty()) return out;
  const auto& ref = runs.front();
  out.spreads.resize(ref.plumes.size());
  for (std::size_t i = 0; i < ref.plumes.size(); ++i) {
    out.spreads[i].reference_label = ref.plumes[i].label_id;
    out.spreads[i].labels.assign(runs.size(), std::nullopt);
    out.spreads[i].labels[0] = ref.plumes[i].label_id;
  }
  out.unmatched.assign(runs.size(), {});
  // index of the matched plume, per reference plume and config
  std::vector<std::vector<std::optional<std::size_t>>> match(ref.plumes.size(),
                                                             std::vector<std::optional<std::size_t>>(runs.size()));
  for (std::size_t i = 0; i < ref.plumes.size(); ++i) match[i][0] = i;

  for (std::size_t c = 1; c < runs.size(); ++c) {
    struct Pair {
      double iou;
      std::size_t ref, other;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < ref.plumes.size(); ++i)
      for (std::size_t j = 0; j < runs[c].plumes.size(); ++j) {
        const double iou = mask_iou(ref.plumes[i].mask, runs[c].plumes[j].mask);
        if (iou >= kMatchIou) pairs.push_back({iou, i, j});
      }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
    std::vector<bool> ref_used(ref.plumes.size(), false);
    std::vector<bool> other_used(runs[c].plumes.size(), false);
    for (const auto& p : pairs) {
      if (ref_used[p.ref] || other_used[p.other]) continue;
      ref_used[p.ref] = other_used[p.other] = true;
      match[p.ref][c] = p.other;
      out.spreads[p.ref].labels[c] = runs[c].plumes[p.other].label_id;
    }
    for (std::size_t j = 0; j < runs[c].plumes.size(); ++j)
      if (!other_used[j]) out.unmatched[c].push_back(runs[c].plumes[j].label_id);
  }

  for (std::size_t i = 0; i < ref.plumes.size(); ++i) {
    std::vector<double> fluxes;
    for (std::size_t c = 0; c < runs.size(); ++c)
      if (match[i][c]) fluxes.push_back(runs[c].records[*match[i][c]].flux_t_per_h);
    auto& s = out.spreads[i];
    s.matched = fluxes.size();
    s.min_flux = *std::min_element(fluxes.begin(), fluxes.end());
    s.max_flux = *std::max_element(fluxes.begin(), fluxes.end());
    s.mean_flux = std::accumulate(fluxes.begin(), fluxes.end(), 0.0) / static_cast<double>(fluxes.size());
    double ss = 0.0;
    for (double f : fluxes) ss += (f - s.mean_flux) * (f - s.mean_flux);
    s.std_flux = std::sqrt(ss / static_cast<double>(fluxes.size()));
  }
  return out;
}

std::pair<RadianceCube, PlumeTruth> simulate_scene(const SimulationConfig& sim, const AbsorptionTable& table,
                                                   const SpectralWindow& window, const GasConstants& constants,
                                                   std::uint64_t seed) {
  const bool noise_model = sim.add_noise || sim.noise_a > 0.0 || sim.noise_c > 0.0;
  const SensorDescriptor desc =
      make_descriptor(sim.first_nm, sim.last_nm, sim.spacing_nm, sim.fwhm_nm, sim.gsd_m,
                      noise_model ? std::optional(sim.noise_a) : std::nullopt,
                      noise_model ? std::optional(sim.noise_c) : std::nullopt);
  if (sim.endmember_count == 0) throw ConfigError("simulation.endmember_count must be >= 1");
  std::vector<std::vector<double>> endmembers;
  for (std::size_t k = 0; k < sim.endmember_count; ++k)
    endmembers.push_back(synthetic_endmember(desc, k, sim.radiance_scale));
  RadianceCube background =
      synth_background(sim.lines, sim.samples, desc, endmembers, sim.mixing_smoothness, derive_seed(seed, 1));
  auto [cube, truth] = inject_plume(background, band_absorption(table, desc, window), sim.plume, constants);
  if (sim.column_gain > 0.0) cube = apply_column_gain(cube, sim.column_gain, derive_seed(seed, 2));
  if (sim.add_noise) cube = add_noise(cube, derive_seed(seed, 3));
  return {std::move(cube), std::move(truth)};
}

std::vector<RunResult> execute(const RunConfig& config) {
  config.validate(true);
  std::vector<RunResult> runs;
  if (config.input.mode == InputMode::kCube) {
    const RadianceCube cube = read_cube(config.input.cube);
    const AbsorptionTable table = load_absorption(config.absorption_table);
    for (const auto& mf : config.mf) runs.push_back(run_level1(cube, table, mf, config));
  } else {
    EnhancementField field = ingest_level2(config.input.enhancement, config.input.sigma, config.input.gsd_m);
    std::optional<Mask> background;
    if (config.input.background_mask) {
      Mask nodata;
      const Grid<double> layer = read_layer(*config.input.background_mask, &nodata);
      Mask m(layer.lines(), layer.samples(), 0);
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = (!nodata[i] && layer[i] != 0.0) ? 1 : 0;
      background = std::move(m);
    }
    runs.push_back(run_level2(std::move(field), background, config));
  }
  return runs;
}

json run_pipeline(const RunConfig& config) {
  RunConfig single = config;
  single.mf.resize(1);
  auto runs = execute(single);
  const RunResult& r = runs.front();
  write_rasters(r, config.output_dir);
  json report = {{"config", config_to_json(single)}, {"run", run_to_json(r)}, {"timings", timings_json(r)}};
  write_text(config.output_dir / "report.json", dump_report(report));
  return report;
}

json run_multi(const RunConfig& config) {
  if (config.input.mode != InputMode::kCube) throw ConfigError("multi-configuration runs need a cube input");
  if (config.mf.size() < 2) throw ConfigError("multi-configuration runs need at least two 'mf' entries");
  auto runs = execute(config);
  const MultiSummary summary = match_plumes(runs);

  json run_list = json::array();
  json timings = json::object();
  for (std::size_t c = 0; c < runs.size(); ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "config_%02zu", c);
    write_rasters(runs[c], config.output_dir / name);
    json entry = run_to_json(runs[c]);
    entry["output_subdir"] = name;
    entry["unmatched_labels"] = summary.unmatched[c];
    run_list.push_back(std::move(entry));
    timings[name] = timings_json(runs[c]);
  }
  json spreads = json::array();
  for (const auto& s : summary.spreads) {
    json labels = json::array();
    for (const auto& l : s.labels) labels.push_back(l ? json(*l) : json(nullptr));
    spreads.push_back({{"reference_label", s.reference_label},
                       {"labels", std::move(labels)},
                       {"matched_configs", s.matched},
                       {"flux_min_t_per_h", s.min_flux},
                       {"flux_mean_t_per_h", s.mean_flux},
                       {"flux_max_t_per_h", s.max_flux},
                       {"flux_std_t_per_h", s.std_flux}});
  }
  json report = {{"config", config_to_json(config)},
                 {"runs", std::move(run_list)},
                 {"spreads", std::move(spreads)},
                 {"match_iou_threshold", kMatchIou},
                 {"timings", std::move(timings)}};
  fs::create_directories(config.output_dir);
  write_text(config.output_dir / "report.json", dump_report(report));
  return report;
}

}  // namespace plumetrace
