#pragma once

#include <cmath>
#include <numbers>

namespace fieldest {

/// Gaussian tail probability Q(x) = P[N(0,1) > x], via erfc so both tails keep
/// full relative precision.
inline double q_function(double x) noexcept { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// Standard normal density.
inline double normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Q(a) - Q(b) for a <= b, choosing the form that avoids cancellation.
inline double gaussian_interval_mass(double a, double b) noexcept {
  if (a >= 0.0) return q_function(a) - q_function(b);
  if (b <= 0.0) return q_function(-b) - q_function(-a);
  return 1.0 - q_function(-a) - q_function(b);
}

}  // namespace fieldest
