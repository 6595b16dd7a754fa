#include "plumetrace/signature.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "plumetrace/errors.hpp"

namespace plumetrace {

void AbsorptionTable::validate() const {
  if (wavelengths_nm.size() != kappa.size()) throw DataError("absorption table: column lengths differ");
  if (wavelengths_nm.size() < 2) throw DataError("absorption table: need at least two rows");
  for (std::size_t i = 1; i < wavelengths_nm.size(); ++i) {
    if (!(wavelengths_nm[i] > wavelengths_nm[i - 1])) {
      throw DataError("absorption table: wavelengths must be strictly increasing");
    }
  }
  for (double k : kappa) {
    if (!(k >= 0.0) || !std::isfinite(k)) throw DataError("absorption table: kappa must be finite and >= 0");
  }
}

double AbsorptionTable::interpolate(double wavelength_nm) const {
  if (wavelength_nm <= wavelengths_nm.front()) return kappa.front();
  if (wavelength_nm >= wavelengths_nm.back()) return kappa.back();
  const auto it = std::upper_bound(wavelengths_nm.begin(), wavelengths_nm.end(), wavelength_nm);
  const std::size_t hi = static_cast<std::size_t>(it - wavelengths_nm.begin());
  const std::size_t lo = hi - 1;
  const double frac = (wavelength_nm - wavelengths_nm[lo]) / (wavelengths_nm[hi] - wavelengths_nm[lo]);
  return kappa[lo] + frac * (kappa[hi] - kappa[lo]);
}

AbsorptionTable read_absorption_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open absorption table " + path.string());
  AbsorptionTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double wl = 0.0;
    double k = 0.0;
    if (!(ss >> wl)) continue;
    if (!(ss >> k)) {
      throw DataError("absorption table " + path.string() + ": line " + std::to_string(line_no) +
                      " has one column");
    }
    table.wavelengths_nm.push_back(wl);
    table.kappa.push_back(k);
  }
  table.validate();
  return table;
}

void write_absorption_table(const AbsorptionTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write absorption table " + path.string());
  out << "# wavelength_nm kappa_per_ppmm\n" << std::setprecision(17);
  for (std::size_t i = 0; i < table.kappa.size(); ++i) {
    out << table.wavelengths_nm[i] << ' ' << table.kappa[i] << '\n';
  }
}

AbsorptionTable synthetic_absorption_table() {
  struct Line {
    double center;
    double width;
    double strength;
  };
  // A weak 2200 nm feature and the main 2300-2380 nm manifold.
  static constexpr Line kLines[] = {
      {2205.0, 12.0, 0.15}, {2280.0, 9.0, 0.35}, {2305.0, 7.0, 0.70}, {2318.0, 5.0, 1.00},
      {2335.0, 6.0, 0.80},  {2355.0, 6.0, 0.85}, {2372.0, 8.0, 0.55}, {2420.0, 10.0, 0.20}};
  constexpr double kPeak = 2.0e-5;  // (ppm·m)^-1
  constexpr double kFloor = 2.0e-8;
  AbsorptionTable table;
  for (int i = 0; i <= 5500; ++i) {
    const double wl = 2000.0 + 0.1 * i;
    double k = kFloor;
    for (const auto& l : kLines) {
      const double z = (wl - l.center) / l.width;
      k += kPeak * l.strength * std::exp(-0.5 * z * z);
    }
    table.wavelengths_nm.push_back(wl);
    table.kappa.push_back(k);
  }
  return table;
}

double fwhm_to_sigma(double fwhm_nm) { return fwhm_nm / (2.0 * std::sqrt(2.0 * std::numbers::ln2)); }

BandAbsorption band_absorption(const AbsorptionTable& table, const SensorDescriptor& descriptor,
                               const SpectralWindow& window) {
  table.validate();
  const auto& centers = descriptor.band_centers_nm;
  const auto& fwhm = descriptor.band_fwhm_nm;

  double max_fwhm = 0.0;
  for (std::size_t b = 0; b < centers.size(); ++b)
    if (window.contains(centers[b])) max_fwhm = std::max(max_fwhm, fwhm[b]);

  const double need_low = window.low_nm - 3.0 * max_fwhm;
  const double need_high = window.high_nm + 3.0 * max_fwhm;
  const double have_low = table.wavelengths_nm.front();
  const double have_high = table.wavelengths_nm.back();
  if (have_low > need_low || have_high < need_high) {
    std::ostringstream msg;
    msg << "absorption table covers [" << have_low << ", " << have_high << "] nm but [" << need_low
        << ", " << need_high << "] nm is required; missing";
    if (have_low > need_low) msg << " [" << need_low << ", " << have_low << "]";
    if (have_high < need_high) msg << " [" << have_high << ", " << need_high << "]";
    throw DataError(msg.str());
  }

  BandAbsorption out;
  const auto& wl = table.wavelengths_nm;
  for (std::size_t b = 0; b < centers.size(); ++b) {
    if (!window.contains(centers[b])) continue;
    const double sigma = fwhm_to_sigma(fwhm[b]);
    const double lo = centers[b] - 3.0 * fwhm[b];
    const double hi = centers[b] + 3.0 * fwhm[b];
    auto first = std::lower_bound(wl.begin(), wl.end(), lo);
    auto last = std::upper_bound(wl.begin(), wl.end(), hi);
    if (first != wl.begin()) --first;
    if (last != wl.end()) ++last;

    double num = 0.0;
    double den = 0.0;
    for (auto it = first; it + 1 < last; ++it) {
      const std::size_t i = static_cast<std::size_t>(it - wl.begin());
      const double z0 = (wl[i] - centers[b]) / sigma;
      const double z1 = (wl[i + 1] - centers[b]) / sigma;
      const double g0 = std::exp(-0.5 * z0 * z0);
      const double g1 = std::exp(-0.5 * z1 * z1);
      const double h = 0.5 * (wl[i + 1] - wl[i]);
      num += h * (g0 * table.kappa[i] + g1 * table.kappa[i + 1]);
      den += h * (g0 + g1);
    }
    // An SRF much narrower than the table spacing degenerates to a point sample.
    const double k = den > 1e-300 && (last - first) >= 3 ? num / den : table.interpolate(centers[b]);
    out.window_band_indices.push_back(b);
    out.k_band.push_back(k);
  }
  if (out.window_band_indices.empty()) throw DataError("no sensor band falls inside the retrieval window");
  return out;
}

TargetSpectrum target_spectrum(const BandAbsorption& absorption, std::span<const double> mu) {
  if (mu.size() != absorption.k_band.size()) {
    throw DataError("target_spectrum: mean has " + std::to_string(mu.size()) + " bands, absorption has " +
                    std::to_string(absorption.k_band.size()));
  }
  TargetSpectrum ts;
  ts.window_band_indices = absorption.window_band_indices;
  ts.k_band = absorption.k_band;
  ts.mu.assign(mu.begin(), mu.end());
  ts.t.resize(mu.size());
  for (std::size_t b = 0; b < mu.size(); ++b) {
    if (!std::isfinite(mu[b])) throw DataError("target_spectrum: non-finite background mean");
    ts.t[b] = -absorption.k_band[b] * mu[b];
  }
  return ts;
}

std::vector<double> transmittance(std::span<const double> k_band, double delta_x) {
  std::vector<double> out(k_band.size());
  for (std::size_t b = 0; b < k_band.size(); ++b) out[b] = std::exp(-k_band[b] * delta_x);
  return out;
}

}  // namespace plumetrace
