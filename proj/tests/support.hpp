#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace ksobol::testing {

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

/// Exact integral over [lo, hi] of the polynomial sum_a c[a] x^a.
inline double poly_integral(std::span<const double> c, double lo, double hi) {
  double acc = 0.0;
  for (std::size_t a = 0; a < c.size(); ++a) {
    const double e = static_cast<double>(a + 1);
    acc += c[a] * (std::pow(hi, e) - std::pow(lo, e)) / e;
  }
  return acc;
}

/// Coefficients of x^m * c(x).
inline std::vector<double> shift_poly(std::span<const double> c, std::size_t m) {
  std::vector<double> out(c.size() + m, 0.0);
  for (std::size_t a = 0; a < c.size(); ++a) out[a + m] = c[a];
  return out;
}

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// One-sample Kolmogorov–Smirnov test against N(0, 1); asymptotic p-value
/// with the Stephens small-sample correction.
inline double ks_normal_pvalue(std::vector<double> z) {
  std::sort(z.begin(), z.end());
  const auto n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = std_normal_cdf(z[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_variance(std::span<const double> v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

}  // namespace ksobol::testing
