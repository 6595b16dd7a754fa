#include "plumetrace/quantification.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "plumetrace/errors.hpp"

namespace plumetrace {

namespace {
constexpr double kMinU10 = 0.5;
}

std::string to_string(WindSigmaMethod method) {
  return method == WindSigmaMethod::kAnalytic ? "analytic" : "forward_difference";
}

WindSigmaMethod parse_wind_sigma_method(const std::string& text) {
  std::string key;
  for (char c : text) key.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "analytic") return WindSigmaMethod::kAnalytic;
  if (key == "forward_difference") return WindSigmaMethod::kForwardDifference;
  throw ConfigError("unknown wind sigma method '" + text + "' (expected analytic or forward_difference)");
}

void WindConfig::validate() const {
  if (!(u10 > 0.0)) throw ConfigError("wind.u10 must be > 0");
  if (!(sigma_u10 >= 0.0)) throw ConfigError("wind.sigma_u10 must be >= 0");
  if (!std::isfinite(beta0) || !std::isfinite(beta1)) throw ConfigError("wind coefficients must be finite");
}

void GasConstants::validate() const {
  if (!(molar_mass >= 0.0) || !(temperature > 0.0) || !(pressure > 0.0) || !(gas_constant > 0.0)) {
    throw ConfigError("gas constants must be positive");
  }
}

double ppmm_to_kg_per_m2(const GasConstants& c) {
  return 1e-6 * c.molar_mass * c.pressure / (c.gas_constant * c.temperature);
}

ImeResult integrate_ime(const EnhancementField& field, const Mask& plume, const GasConstants& constants) {
  if (!plume.same_shape(field.delta_x)) throw DataError("integrate_ime: mask shape does not match field");
  double sum = 0.0;
  double var = 0.0;
  std::size_t n = 0;
  bool have_sigma = field.sigma_total.has_value();
  for (std::size_t i = 0; i < plume.size(); ++i) {
    if (!plume[i] || field.nodata[i]) continue;
    ++n;
    sum += field.delta_x[i];
    if (have_sigma) {
      const double s = (*field.sigma_total)[i];
      var += s * s;
    }
  }
  if (n == 0) throw DomainError("integrate_ime: empty plume mask");
  const double scale = ppmm_to_kg_per_m2(constants) * field.gsd_m * field.gsd_m;
  ImeResult out;
  out.ime_kg = scale * sum;
  if (have_sigma) out.sigma_ime_kg = scale * std::sqrt(var);
  return out;
}

double plume_length(double area_m2) {
  if (!(area_m2 > 0.0)) throw DomainError("plume_length: area must be > 0");
  return std::sqrt(area_m2);
}

EffectiveWind effective_wind(const WindConfig& wind) {
  EffectiveWind out;
  double u = wind.u10;
  if (u < kMinU10) {
    u = kMinU10;
    out.clamped = true;
  }
  out.u_eff = wind.beta0 + wind.beta1 * std::log(u);
  if (wind.sigma_method == WindSigmaMethod::kAnalytic) {
    out.sigma_u_eff = wind.beta1 * wind.sigma_u10 / u;
  } else {
    out.sigma_u_eff = wind.beta1 * std::log((u + wind.sigma_u10) / u);
  }
  return out;
}

double flux(double ime_kg, double length_m, double u_eff) {
  if (!(length_m > 0.0)) throw DomainError("flux: plume length must be > 0");
  return kKgPerSecondToTonnePerHour * u_eff * ime_kg / length_m;
}

FluxUncertainty flux_uncertainty(double ime_kg, std::optional<double> sigma_ime_kg, double length_m, double u_eff,
                                 double sigma_u_eff) {
  if (!(length_m > 0.0)) throw DomainError("flux_uncertainty: plume length must be > 0");
  FluxUncertainty out;
  out.sigma_wind = kKgPerSecondToTonnePerHour * sigma_u_eff * std::abs(ime_kg) / length_m;
  if (sigma_ime_kg) {
    out.sigma_ime = kKgPerSecondToTonnePerHour * std::abs(u_eff) * *sigma_ime_kg / length_m;
    out.sigma_flux = std::sqrt(out.sigma_wind * out.sigma_wind + *out.sigma_ime * *out.sigma_ime);
  } else {
    out.sigma_flux = out.sigma_wind;
  }
  return out;
}

PlumeRecord quantify_only(double ime_kg, std::optional<double> sigma_ime_kg, double area_m2, const WindConfig& wind) {
  wind.validate();
  PlumeRecord r;
  r.area_m2 = area_m2;
  r.ime_kg = ime_kg;
  r.sigma_ime_kg = sigma_ime_kg;
  r.length_m = plume_length(area_m2);
  const EffectiveWind w = effective_wind(wind);
  r.u_eff = w.u_eff;
  r.sigma_u_eff = w.sigma_u_eff;
  r.flux_kg_per_s = r.u_eff * ime_kg / r.length_m;
  r.flux_t_per_h = flux(ime_kg, r.length_m, r.u_eff);
  const FluxUncertainty u = flux_uncertainty(ime_kg, sigma_ime_kg, r.length_m, r.u_eff, r.sigma_u_eff);
  r.sigma_flux_t_per_h = u.sigma_flux;
  r.sigma_flux_wind = u.sigma_wind;
  r.sigma_flux_ime = u.sigma_ime;
  r.assumptions.push_back("length_scale=sqrt(area)");
  r.assumptions.push_back("sigma_u_eff_method=" + to_string(wind.sigma_method));
  if (w.clamped) r.assumptions.push_back("u10_clamped_to_0.5");
  if (sigma_ime_kg) {
    r.assumptions.push_back("sigma_ime_pixel_independence");
  } else {
    r.assumptions.push_back("sigma_ime_unavailable:sigma_flux_is_wind_only");
  }
  return r;
}

PlumeRecord quantify_plume(const EnhancementField& field, const PlumeMask& plume, const WindConfig& wind,
                           const GasConstants& constants) {
  constants.validate();
  const ImeResult ime = integrate_ime(field, plume.mask, constants);
  PlumeRecord r = quantify_only(ime.ime_kg, ime.sigma_ime_kg, plume.area_m2, wind);
  r.label_id = plume.label_id;
  r.pixel_count = plume.pixel_count;
  if (plume.touches_edge) r.assumptions.push_back("plume_touches_scene_edge");
  return r;
}

}  // namespace plumetrace
