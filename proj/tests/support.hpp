// Shared generators and independent oracles for the test binaries.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/LU>

#include "plumetrace/pipeline.hpp"

namespace test_support {

using namespace plumetrace;

struct Rng {
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine); }
  std::mt19937_64 engine;
};

inline Eigen::MatrixXd random_spd(int p, Rng& rng) {
  Eigen::MatrixXd a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = rng.normal();
  return a * a.transpose() / p + 0.1 * Eigen::MatrixXd::Identity(p, p);
}

/// `bands` centers evenly inside the default retrieval window.
inline SensorDescriptor window_descriptor(std::size_t bands, double gsd = 30.0) {
  SensorDescriptor d;
  d.sensor_id = "test";
  d.gsd_m = gsd;
  for (std::size_t b = 0; b < bands; ++b) {
    d.band_centers_nm.push_back(2110.0 + 330.0 * static_cast<double>(b) / static_cast<double>(std::max<std::size_t>(bands - 1, 1)));
    d.band_fwhm_nm.push_back(8.0);
  }
  return d;
}

/// Multivariate normal cube x = mean + chol(cov) z.
inline RadianceCube gaussian_cube(const SensorDescriptor& d, std::size_t lines, std::size_t samples,
                                  const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng) {
  const Eigen::MatrixXd l = cov.llt().matrixL();
  const std::size_t p = d.band_count();
  std::vector<double> data(p * lines * samples);
  Eigen::VectorXd z(static_cast<Eigen::Index>(p));
  for (std::size_t px = 0; px < lines * samples; ++px) {
    for (auto& v : z) v = rng.normal();
    const Eigen::VectorXd x = mean + l * z;
    for (std::size_t b = 0; b < p; ++b) data[b * lines * samples + px] = x(static_cast<Eigen::Index>(b));
  }
  return RadianceCube(d, lines, samples, std::move(data));
}

/// Random band absorption over every band of the descriptor.
inline BandAbsorption random_absorption(std::size_t bands, Rng& rng) {
  BandAbsorption a;
  for (std::size_t b = 0; b < bands; ++b) {
    a.window_band_indices.push_back(b);
    a.k_band.push_back(rng.uniform(1e-6, 2e-5));
  }
  return a;
}

/// Naive two-pass statistics with the documented shrinkage rule.
struct NaiveStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline NaiveStats naive_stats(const RadianceCube& cube, double gamma = 0.05, double scale = 1e-8) {
  const auto p = static_cast<Eigen::Index>(cube.bands());
  std::vector<Eigen::VectorXd> xs;
  for (std::size_t l = 0; l < cube.lines(); ++l)
    for (std::size_t s = 0; s < cube.samples(); ++s) {
      if (!cube.is_valid(l, s)) continue;
      Eigen::VectorXd x(p);
      for (Eigen::Index b = 0; b < p; ++b) x(b) = cube.at(static_cast<std::size_t>(b), l, s);
      xs.push_back(x);
    }
  NaiveStats out;
  out.mean = Eigen::VectorXd::Zero(p);
  for (const auto& x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (const auto& x : xs) s += (x - out.mean) * (x - out.mean).transpose();
  s /= static_cast<double>(xs.size());
  const double tr = s.trace() / static_cast<double>(p);
  const double delta = std::max(gamma * tr, scale * (tr + 1.0));
  out.cov = (1.0 - gamma) * s + delta * Eigen::MatrixXd::Identity(p, p);
  return out;
}

/// argmin_a (r - a t)' S^-1 (r - a t), found as the vertex of the quadratic
/// through three evaluations at -h, 0, h; S^-1 from a full-pivot LU, not a Cholesky solve.
inline double gls_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                         const Eigen::VectorXd& t) {
  const Eigen::MatrixXd inv = sigma.fullPivLu().inverse();
  const Eigen::VectorXd r = x - mu;
  auto q = [&](double a) {
    const Eigen::VectorXd e = r - a * t;
    return e.dot(inv * e);
  };
  // probe one standard error either side so the differences do not cancel
  const double h = 1.0 / std::sqrt(t.dot(inv * t));
  const double qm = q(-h), q0 = q(0.0), qp = q(h);
  return h * (qm - qp) / (2.0 * (qm - 2.0 * q0 + qp));
}

/// 1 ppm·m of an ideal gas at STP: 1e-6 m of pure gas column, 22.414 L/mol.
inline double stp_conversion_oracle(double molar_mass) { return 1e-6 / 0.022414 * molar_mass; }

/// Brute-force dilation by definition: any set pixel within the disk.
inline Mask brute_dilate(const Mask& m, int r) {
  Mask out(m.lines(), m.samples(), 0);
  const long L = static_cast<long>(m.lines()), S = static_cast<long>(m.samples());
  for (long l = 0; l < L; ++l)
    for (long s = 0; s < S; ++s)
      for (long dl = -r; dl <= r; ++dl)
        for (long ds = -r; ds <= r; ++ds) {
          if (dl * dl + ds * ds > static_cast<long>(r) * r) continue;
          const long a = l + dl, b = s + ds;
          if (a >= 0 && a < L && b >= 0 && b < S && m(static_cast<std::size_t>(a), static_cast<std::size_t>(b)))
            out(static_cast<std::size_t>(l), static_cast<std::size_t>(s)) = 1;
        }
  return out;
}

inline Mask random_mask(std::size_t lines, std::size_t samples, double p, Rng& rng) {
  Mask m(lines, samples, 0);
  for (auto& v : m.values()) v = rng.uniform(0.0, 1.0) < p ? 1 : 0;
  return m;
}

inline double relative_error(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("plumetrace_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Homogeneous, optionally noisy simulator scene with a plume.
inline SimulationConfig thin_plume_scene(bool noise) {
  SimulationConfig sim;
  sim.lines = 80;
  sim.samples = 80;
  sim.endmember_count = 1;
  sim.plume = {40.0, 40.0, 800.0, 150.0, 90.0, 0.5};
  sim.add_noise = noise;
  if (noise) {
    sim.noise_a = 1e-4;
    sim.noise_c = 1e-4;
  }
  return sim;
}

}  // namespace test_support
