#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "ksobol/error.hpp"
#include "ksobol/summation.hpp"

namespace ksobol::quad {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss–Legendre rule with `count` nodes on [lo, hi]. Nodes by Newton
/// iteration on the Legendre recurrence, accurate to a few ulps.
inline Rule gauss_legendre(std::size_t count, double lo = -1.0, double hi = 1.0) {
  require(count >= 1, ErrorCode::invalid_argument, "gauss_legendre: count must be >= 1");
  Rule rule;
  rule.nodes.resize(count);
  rule.weights.resize(count);
  const auto n = static_cast<double>(count);
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const std::size_t m = (count + 1) / 2;
  for (std::size_t i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (std::size_t j = 1; j <= count; ++j) {
        const double p2 = p1;
        p1 = p0;
        const auto jd = static_cast<double>(j);
        p0 = ((2.0 * jd - 1.0) * z * p1 - (jd - 1.0) * p2) / jd;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    rule.nodes[i] = mid - half * z;
    rule.nodes[count - 1 - i] = mid + half * z;
    rule.weights[i] = half * w;
    rule.weights[count - 1 - i] = half * w;
  }
  return rule;
}

/// Integrates `f` over the box prod_i [lo_i, hi_i] with a tensor
/// Gauss–Legendre rule of `count` nodes per axis.
inline double tensor_integrate(const std::function<double(std::span<const double>)>& f,
                               std::span<const double> lo, std::span<const double> hi,
                               std::size_t count) {
  const std::size_t d = lo.size();
  require(hi.size() == d && d >= 1, ErrorCode::dimension_mismatch,
          "tensor_integrate: bounds dimension mismatch");
  std::vector<Rule> rules;
  rules.reserve(d);
  for (std::size_t i = 0; i < d; ++i) rules.push_back(gauss_legendre(count, lo[i], hi[i]));

  std::vector<std::size_t> idx(d, 0);
  std::vector<double> x(d);
  CompensatedSum acc;
  while (true) {
    double w = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = rules[i].nodes[idx[i]];
      w *= rules[i].weights[idx[i]];
    }
    acc.add(w * f(x));
    std::size_t axis = 0;
    while (axis < d && ++idx[axis] == count) {
      idx[axis] = 0;
      ++axis;
    }
    if (axis == d) break;
  }
  return acc.value();
}

namespace detail {
inline std::string failure_message(const char* rule, double lo, double hi, double value, double err) {
  std::ostringstream os;
  os << std::setprecision(6) << rule << " quadrature did not converge on [" << lo << ", " << hi << "]: value " << value
     << ", error estimate " << err;
  return os.str();
}
}  // namespace detail

/// Adaptive Gauss–Kronrod (61 points) on [lo, hi] to the requested relative
/// tolerance; throws quadrature_failure when the error estimate stays above it.
inline double adaptive(const std::function<double(double)>& f, double lo, double hi,
                       double rel_tol = 1e-10, double abs_floor = 1e-300) {
  double err = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, lo, hi, 15, rel_tol, &err);
  if (!(err <= rel_tol * std::abs(value) + abs_floor) || !std::isfinite(value)) {
    throw Error(ErrorCode::quadrature_failure, detail::failure_message("adaptive", lo, hi, value, err));
  }
  return value;
}

/// Tanh-sinh on [lo, hi]; tolerates integrable singularities at the endpoints.
inline double endpoint_singular(const std::function<double(double)>& f, double lo, double hi,
                                double rel_tol = 1e-10) {
  boost::math::quadrature::tanh_sinh<double> rule;
  double err = 0.0;
  double l1 = 0.0;
  const double value = rule.integrate(f, lo, hi, rel_tol, &err, &l1);
  if (!(err <= rel_tol * std::max(l1, std::abs(value)) * 10.0) || !std::isfinite(value)) {
    throw Error(ErrorCode::quadrature_failure, detail::failure_message("tanh-sinh", lo, hi, value, err));
  }
  return value;
}

}  // namespace ksobol::quad
