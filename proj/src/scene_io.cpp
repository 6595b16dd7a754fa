#include "plumetrace/scene_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "plumetrace/errors.hpp"

namespace fs = std::filesystem;

namespace plumetrace {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

double parse_double(const std::string& text, const std::string& key) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError("header key '" + key + "': cannot parse number '" + text + "'");
  }
  return value;
}

std::size_t parse_count(const std::string& text, const std::string& key) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("header key '" + key + "': cannot parse count '" + text + "'");
  }
  return value;
}

std::vector<double> parse_list(std::string text, const std::string& key) {
  text = trim(text);
  if (!text.empty() && text.front() == '{') text.erase(0, 1);
  if (!text.empty() && text.back() == '}') text.pop_back();
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_double(item, key));
  }
  return out;
}

std::string join_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format_number(values[i]);
  }
  return out;
}

using Header = std::map<std::string, std::string>;

Header parse_header(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open header " + path.string());
  Header header;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';' || t == "ENVI") continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed header line in " + path.string() + ": " + t);
    header[lower(trim(t.substr(0, eq)))] = trim(t.substr(eq + 1));
  }
  return header;
}

const std::string& require(const Header& header, const std::string& key, const fs::path& path) {
  const auto it = header.find(key);
  if (it == header.end()) {
    throw ConfigError("missing header key '" + key + "' in " + path.string());
  }
  return it->second;
}

// Header keys owned by the raster layer; everything else lands in Raster::extra.
bool is_core_key(const std::string& key) {
  static const char* kCore[] = {"samples", "lines", "bands", "data_type", "interleave",
                                "byte_order", "gsd_m", "origin_e_m", "origin_n_m"};
  return std::any_of(std::begin(kCore), std::end(kCore), [&](const char* k) { return key == k; });
}

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

bool is_sentinel(float v) { return v == kNodataSentinel; }

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  std::string out(buf, ptr);
  if (out.find_first_of(".e") == std::string::npos) out += ".0";
  return out;
}

void SensorDescriptor::validate() const {
  const std::size_t n = band_centers_nm.size();
  if (band_fwhm_nm.size() != n) {
    throw DataError("descriptor: fwhm count " + std::to_string(band_fwhm_nm.size()) +
                    " does not match band count " + std::to_string(n));
  }
  for (std::size_t b = 1; b < n; ++b) {
    if (!(band_centers_nm[b] > band_centers_nm[b - 1])) {
      throw DataError("descriptor: wavelengths must be strictly increasing (band " +
                      std::to_string(b) + ")");
    }
  }
  for (double f : band_fwhm_nm) {
    if (!(f > 0.0)) throw DataError("descriptor: fwhm must be > 0");
  }
  if (!(gsd_m > 0.0) || !std::isfinite(gsd_m)) throw DataError("descriptor: gsd must be > 0");
  for (const auto* coeffs : {&noise_a, &noise_c}) {
    if (!coeffs->has_value()) continue;
    if ((*coeffs)->size() != n) throw DataError("descriptor: noise coefficient count mismatch");
    for (double c : **coeffs) {
      if (!(c >= 0.0)) throw DataError("descriptor: noise coefficients must be non-negative");
    }
  }
  if (noise_a.has_value() != noise_c.has_value()) {
    throw DataError("descriptor: noise_a and noise_c must be given together");
  }
}

RadianceCube::RadianceCube(SensorDescriptor descriptor, std::size_t lines, std::size_t samples,
                           std::vector<double> data, GeoOrigin origin, Mask nodata)
    : descriptor_(std::move(descriptor)),
      lines_(lines),
      samples_(samples),
      data_(std::move(data)),
      origin_(origin),
      nodata_(nodata.empty() ? Mask(lines, samples, 0) : std::move(nodata)) {
  validate();
  // Canonical in-memory value for nodata pixels.
  for (std::size_t l = 0; l < lines_; ++l)
    for (std::size_t s = 0; s < samples_; ++s)
      if (nodata_(l, s))
        for (std::size_t b = 0; b < bands(); ++b) at(b, l, s) = kNaN;
}

void RadianceCube::validate() const {
  descriptor_.validate();
  if (bands() < 2) throw DataError("cube: band count must be >= 2");
  if (lines_ < 1 || samples_ < 1) throw DataError("cube: lines and samples must be >= 1");
  if (data_.size() != bands() * lines_ * samples_) {
    throw DataError("cube: data size " + std::to_string(data_.size()) + " does not match " +
                    std::to_string(bands()) + "x" + std::to_string(lines_) + "x" +
                    std::to_string(samples_));
  }
  if (nodata_.lines() != lines_ || nodata_.samples() != samples_) {
    throw DataError("cube: nodata mask shape mismatch");
  }
  for (std::size_t b = 0; b < bands(); ++b)
    for (std::size_t l = 0; l < lines_; ++l)
      for (std::size_t s = 0; s < samples_; ++s)
        if (!nodata_(l, s) && !std::isfinite(at(b, l, s))) {
          throw DataError("cube: non-finite radiance at band " + std::to_string(b) + ", line " +
                          std::to_string(l) + ", sample " + std::to_string(s));
        }
}

Eigen::VectorXd RadianceCube::spectrum(std::size_t line, std::size_t sample,
                                       const std::vector<std::size_t>& band_indices) const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(band_indices.size()));
  for (std::size_t i = 0; i < band_indices.size(); ++i) {
    x[static_cast<Eigen::Index>(i)] = at(band_indices[i], line, sample);
  }
  return x;
}

void EnhancementField::validate() const {
  if (!nodata.same_shape(delta_x)) throw DataError("enhancement: nodata mask shape mismatch");
  for (const auto* layer : {&sigma_noise, &sigma_clutter, &sigma_total}) {
    if (!layer->has_value()) continue;
    if (!(*layer)->same_shape(delta_x)) throw DataError("enhancement: sigma layer shape mismatch");
    for (std::size_t i = 0; i < delta_x.size(); ++i) {
      if (!nodata[i] && !((**layer)[i] >= 0.0)) throw DataError("enhancement: negative sigma");
    }
  }
  if (!(gsd_m > 0.0)) throw DataError("enhancement: gsd must be > 0");
}

fs::path header_path(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".hdr") return p;
  if (p.extension() == ".bin") return p.replace_extension(".hdr");
  return fs::path(p.string() + ".hdr");
}

fs::path payload_path(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".bin") return p;
  if (p.extension() == ".hdr") return p.replace_extension(".bin");
  return fs::path(p.string() + ".bin");
}

Raster read_raster(const fs::path& path) {
  const fs::path hdr = header_path(path);
  const fs::path bin = payload_path(path);
  const Header header = parse_header(hdr);

  Raster r;
  r.samples = parse_count(require(header, "samples", hdr), "samples");
  r.lines = parse_count(require(header, "lines", hdr), "lines");
  r.bands = parse_count(require(header, "bands", hdr), "bands");
  if (lower(require(header, "data_type", hdr)) != "float32") {
    throw ConfigError("unsupported data_type in " + hdr.string() + " (expected float32)");
  }
  if (lower(require(header, "interleave", hdr)) != "bsq") {
    throw ConfigError("unsupported interleave in " + hdr.string() + " (expected bsq)");
  }
  if (lower(require(header, "byte_order", hdr)) != "lsb") {
    throw ConfigError("unsupported byte_order in " + hdr.string() + " (expected lsb)");
  }
  r.gsd_m = parse_double(require(header, "gsd_m", hdr), "gsd_m");
  if (!(r.gsd_m > 0.0)) throw DataError("gsd_m must be > 0 in " + hdr.string());
  if (auto it = header.find("origin_e_m"); it != header.end())
    r.origin.easting = parse_double(it->second, "origin_e_m");
  if (auto it = header.find("origin_n_m"); it != header.end())
    r.origin.northing = parse_double(it->second, "origin_n_m");
  for (const auto& [k, v] : header)
    if (!is_core_key(k)) r.extra[k] = v;

  const std::uintmax_t expected = static_cast<std::uintmax_t>(r.samples) * r.lines * r.bands * 4;
  std::error_code ec;
  const std::uintmax_t actual = fs::file_size(bin, ec);
  if (ec) throw ConfigError("cannot open payload " + bin.string());
  if (actual != expected) {
    throw DataError("payload " + bin.string() + " has " + std::to_string(actual) +
                    " bytes, expected " + std::to_string(expected));
  }
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("cannot open payload " + bin.string());
  std::vector<std::uint32_t> raw(r.samples * r.lines * r.bands);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
  if (!in) throw IoError("short read on " + bin.string());
  r.values.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) r.values[i] = std::bit_cast<float>(to_little(raw[i]));
  return r;
}

void write_raster(const Raster& raster, const fs::path& path) {
  if (raster.values.size() != raster.bands * raster.lines * raster.samples) {
    throw DataError("raster: value count does not match dimensions");
  }
  const fs::path hdr = header_path(path);
  const fs::path bin = payload_path(path);
  if (hdr.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(hdr.parent_path(), ec);
  }
  {
    std::ofstream out(hdr);
    if (!out) throw IoError("cannot write header " + hdr.string());
    out << "ENVI\n"
        << "samples = " << raster.samples << "\n"
        << "lines = " << raster.lines << "\n"
        << "bands = " << raster.bands << "\n"
        << "data_type = float32\n"
        << "interleave = bsq\n"
        << "byte_order = lsb\n"
        << "gsd_m = " << format_number(raster.gsd_m) << "\n"
        << "origin_e_m = " << format_number(raster.origin.easting) << "\n"
        << "origin_n_m = " << format_number(raster.origin.northing) << "\n";
    for (const auto& [k, v] : raster.extra) out << k << " = " << v << "\n";
    if (!out) throw IoError("failed writing header " + hdr.string());
  }
  std::vector<std::uint32_t> raw(raster.values.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    raw[i] = to_little(std::bit_cast<std::uint32_t>(raster.values[i]));
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw IoError("cannot write payload " + bin.string());
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  if (!out) throw IoError("failed writing payload " + bin.string());
}

RadianceCube read_cube(const fs::path& path) {
  Raster r = read_raster(path);
  const fs::path hdr = header_path(path);
  SensorDescriptor d;
  if (!r.extra.count("wavelengths_nm")) throw ConfigError("missing header key 'wavelengths_nm' in " + hdr.string());
  if (!r.extra.count("fwhm_nm")) throw ConfigError("missing header key 'fwhm_nm' in " + hdr.string());
  d.band_centers_nm = parse_list(r.extra["wavelengths_nm"], "wavelengths_nm");
  d.band_fwhm_nm = parse_list(r.extra["fwhm_nm"], "fwhm_nm");
  d.gsd_m = r.gsd_m;
  if (auto it = r.extra.find("sensor_id"); it != r.extra.end()) d.sensor_id = it->second;
  if (auto it = r.extra.find("noise_a"); it != r.extra.end()) d.noise_a = parse_list(it->second, "noise_a");
  if (auto it = r.extra.find("noise_c"); it != r.extra.end()) d.noise_c = parse_list(it->second, "noise_c");
  if (d.band_centers_nm.size() != r.bands) {
    throw DataError("header " + hdr.string() + ": " + std::to_string(d.band_centers_nm.size()) +
                    " wavelengths for " + std::to_string(r.bands) + " bands");
  }
  d.validate();

  Mask nodata(r.lines, r.samples, 0);
  std::vector<double> data(r.values.size());
  const std::size_t plane = r.lines * r.samples;
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const float v = r.values[i];
    if (is_sentinel(v)) {
      nodata[i % plane] = 1;
    } else if (!std::isfinite(v)) {
      throw DataError("payload of " + hdr.string() + " holds a non-finite value at offset " + std::to_string(i));
    }
    data[i] = static_cast<double>(v);
  }
  return RadianceCube(std::move(d), r.lines, r.samples, std::move(data), r.origin, std::move(nodata));
}

void write_cube(const RadianceCube& cube, const fs::path& path) {
  cube.validate();
  const auto& d = cube.descriptor();
  Raster r;
  r.bands = cube.bands();
  r.lines = cube.lines();
  r.samples = cube.samples();
  r.gsd_m = d.gsd_m;
  r.origin = cube.origin();
  r.extra["sensor_id"] = d.sensor_id;
  r.extra["wavelengths_nm"] = join_list(d.band_centers_nm);
  r.extra["fwhm_nm"] = join_list(d.band_fwhm_nm);
  if (d.noise_a) r.extra["noise_a"] = join_list(*d.noise_a);
  if (d.noise_c) r.extra["noise_c"] = join_list(*d.noise_c);
  r.values.resize(cube.data().size());
  const std::size_t plane = cube.lines() * cube.samples();
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    r.values[i] = cube.nodata()[i % plane] ? kNodataSentinel : static_cast<float>(cube.data()[i]);
  }
  write_raster(r, path);
}

Grid<double> read_layer(const fs::path& path, Mask* nodata, double* gsd_m, GeoOrigin* origin) {
  const Raster r = read_raster(path);
  if (r.bands != 1) {
    throw DataError("expected a single-band raster in " + header_path(path).string() + ", found " +
                    std::to_string(r.bands) + " bands");
  }
  Grid<double> layer(r.lines, r.samples, 0.0);
  Mask mask(r.lines, r.samples, 0);
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const float v = r.values[i];
    if (is_sentinel(v) || !std::isfinite(v)) {
      mask[i] = 1;
      layer[i] = kNaN;
    } else {
      layer[i] = static_cast<double>(v);
    }
  }
  if (nodata) *nodata = std::move(mask);
  if (gsd_m) *gsd_m = r.gsd_m;
  if (origin) *origin = r.origin;
  return layer;
}

void write_layer(const Grid<double>& layer, const Mask& nodata, double gsd_m, const GeoOrigin& origin,
                 const fs::path& path, const std::map<std::string, std::string>& extra) {
  Raster r;
  r.bands = 1;
  r.lines = layer.lines();
  r.samples = layer.samples();
  r.gsd_m = gsd_m;
  r.origin = origin;
  r.extra = extra;
  r.values.resize(layer.size());
  for (std::size_t i = 0; i < layer.size(); ++i) {
    const bool missing = (!nodata.empty() && nodata[i]) || !std::isfinite(layer[i]);
    r.values[i] = missing ? kNodataSentinel : static_cast<float>(layer[i]);
  }
  write_raster(r, path);
}

EnhancementField ingest_level2(const fs::path& enhancement_path, const std::optional<fs::path>& sigma_path,
                               std::optional<double> gsd_m) {
  EnhancementField field;
  double header_gsd = 0.0;
  field.delta_x = read_layer(enhancement_path, &field.nodata, &header_gsd, &field.origin);
  field.gsd_m = gsd_m.value_or(header_gsd);
  field.provenance = "external";
  const auto extra = read_raster(enhancement_path).extra;
  if (auto it = extra.find("provenance"); it != extra.end()) field.provenance = "external:" + it->second;
  if (sigma_path) {
    Mask sigma_nodata;
    Grid<double> sigma = read_layer(*sigma_path, &sigma_nodata);
    if (!sigma.same_shape(field.delta_x)) {
      throw DataError("sigma raster is " + std::to_string(sigma.lines()) + "x" + std::to_string(sigma.samples()) +
                      " but enhancement raster is " + std::to_string(field.delta_x.lines()) + "x" +
                      std::to_string(field.delta_x.samples()));
    }
    for (std::size_t i = 0; i < sigma.size(); ++i) {
      if (sigma_nodata[i]) {
        field.nodata[i] = 1;
      } else if (sigma[i] < 0.0) {
        throw DataError("sigma raster holds a negative value at offset " + std::to_string(i));
      }
    }
    for (std::size_t i = 0; i < sigma.size(); ++i)
      if (field.nodata[i]) {
        sigma[i] = kNaN;
        field.delta_x[i] = kNaN;
      }
    field.sigma_total = std::move(sigma);
  }
  field.validate();
  return field;
}

double effective_gsd(double area_m2, std::size_t pixel_count) {
  if (pixel_count == 0) throw DomainError("effective_gsd: pixel count must be > 0");
  if (!(area_m2 >= 0.0)) throw DomainError("effective_gsd: area must be >= 0");
  return std::sqrt(area_m2 / static_cast<double>(pixel_count));
}

}  // namespace plumetrace
