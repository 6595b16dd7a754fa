#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plumetrace/scene_io.hpp"
#include "plumetrace/segmentation.hpp"

namespace plumetrace {

enum class WindSigmaMethod { kAnalytic, kForwardDifference };

std::string to_string(WindSigmaMethod method);
WindSigmaMethod parse_wind_sigma_method(const std::string& text);

struct WindConfig {
  double u10 = 3.0;        // m/s
  double sigma_u10 = 1.0;  // m/s
  double beta0 = 0.6;      // m/s
  double beta1 = 1.1;      // m/s per ln(m/s)
  WindSigmaMethod sigma_method = WindSigmaMethod::kAnalytic;

  void validate() const;
};

struct GasConstants {
  double molar_mass = 0.016043;       // kg/mol, CH4
  double temperature = 273.15;        // K
  double pressure = 101325.0;         // Pa
  double gas_constant = 8.314462618;  // J/(mol K)

  void validate() const;
};

/// kg m^-2 per ppm·m from the ideal-gas molar density.
double ppmm_to_kg_per_m2(const GasConstants& constants);

struct ImeResult {
  double ime_kg = 0.0;
  std::optional<double> sigma_ime_kg;  // absent when the field has no sigma_total
};

/// IME = f * gsd^2 * sum(dX); sigma = f * gsd^2 * sqrt(sum(sigma_total^2)).
/// Negative enhancements inside the mask are integrated as they are.
ImeResult integrate_ime(const EnhancementField& field, const Mask& plume, const GasConstants& constants);

/// Plume length scale L = sqrt(area).
double plume_length(double area_m2);

struct EffectiveWind {
  double u_eff = 0.0;
  double sigma_u_eff = 0.0;
  bool clamped = false;
};

/// U_eff = beta0 + beta1 ln(u10), u10 clamped to >= 0.5 m/s.
EffectiveWind effective_wind(const WindConfig& wind);

inline constexpr double kKgPerSecondToTonnePerHour = 3.6;

/// Q (t/h) = 3.6 * U_eff * IME / L.
double flux(double ime_kg, double length_m, double u_eff);

struct FluxUncertainty {
  double sigma_flux = 0.0;
  double sigma_wind = 0.0;
  std::optional<double> sigma_ime;
};

FluxUncertainty flux_uncertainty(double ime_kg, std::optional<double> sigma_ime_kg, double length_m, double u_eff,
                                 double sigma_u_eff);

struct PlumeRecord {
  int label_id = 0;
  std::size_t pixel_count = 0;
  double area_m2 = 0.0;
  double ime_kg = 0.0;
  std::optional<double> sigma_ime_kg;
  double length_m = 0.0;
  double u_eff = 0.0;
  double sigma_u_eff = 0.0;
  double flux_kg_per_s = 0.0;
  double flux_t_per_h = 0.0;
  double sigma_flux_t_per_h = 0.0;
  double sigma_flux_wind = 0.0;
  std::optional<double> sigma_flux_ime;
  std::optional<double> sigma_clutter;
  std::vector<std::string> assumptions;
};

/// Scalar chain: length -> effective wind -> flux -> uncertainty.
PlumeRecord quantify_only(double ime_kg, std::optional<double> sigma_ime_kg, double area_m2, const WindConfig& wind);

/// IME over the plume mask followed by the scalar chain.
PlumeRecord quantify_plume(const EnhancementField& field, const PlumeMask& plume, const WindConfig& wind,
                           const GasConstants& constants);

}  // namespace plumetrace
