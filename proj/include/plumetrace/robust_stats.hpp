#pragma once

#include <span>

namespace plumetrace {

/// Scale factor turning a median absolute deviation into a Gaussian sigma.
inline constexpr double kMadToSigma = 1.4826;

double median(std::span<const double> values);

/// Median of |v - median(v)|.
double median_absolute_deviation(std::span<const double> values);

/// Sample standard deviation (divisor n - 1); 0 for fewer than two values.
double sample_std(std::span<const double> values);

/// 1.4826 * MAD, or the sample standard deviation when the MAD is zero.
double robust_sigma(std::span<const double> values);

}  // namespace plumetrace
