#pragma once

#include <cmath>
#include <limits>
#include <vector>

namespace frips {

inline constexpr double kPi = 3.14159265358979323846;

// sin(s)/s, even, series below |s| = 1e-4 where the quotient loses digits.
inline double sinc(double s) {
  const double a = std::fabs(s);
  if (a < 1e-4) {
    const double s2 = s * s;
    return 1.0 - s2 / 6.0 + s2 * s2 / 120.0;
  }
  return std::sin(a) / a;
}

// log(sin(s)/s) for |s| <= pi; -inf at the endpoint is fine for callers
// that work in log space.
inline double log_sinc(double s) {
  const double a = std::fabs(s);
  if (a < 1e-4) {
    const double s2 = s * s;
    return -s2 / 6.0 - s2 * s2 / 180.0;
  }
  return std::log(std::sin(a)) - std::log(a);
}

inline double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

}  // namespace frips
