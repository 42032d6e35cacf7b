#pragma once

// Analytic test functions with closed-form conditional moments. Every
// conditional function takes the masked coordinates only, in mask order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ksobol/error.hpp"
#include "ksobol/estimator.hpp"
#include "ksobol/inputs.hpp"

namespace ksobol {

struct AnalyticModel {
  using PointFn = std::function<double(std::span<const double>)>;
  using MaskedFn = std::function<double(const SubsetSpec&, std::span<const double>)>;

  std::string name;
  InputModel inputs;
  PointFn g;         ///< Y = g(V)
  MaskedFn g1;       ///< E[Y | X = x]
  MaskedFn g2;       ///< E[Y^2 | X = x]
  std::function<double(const SubsetSpec&)> second_moment_g1;  ///< E[g1(X)^2]
  double mean_y = 0.0;
  double var_y = 0.0;

  std::size_t p() const noexcept { return inputs.dim(); }

  double true_t(const SubsetSpec& spec) const {
    spec.validate(p());
    return second_moment_g1(spec);
  }

  double true_sobol(const SubsetSpec& spec) const { return (true_t(spec) - mean_y * mean_y) / var_y; }

  Eigen::VectorXd evaluate(const Eigen::MatrixXd& v) const {
    require(static_cast<std::size_t>(v.cols()) == p(), ErrorCode::dimension_mismatch,
            "model evaluation: column count differs from model dimension");
    Eigen::VectorXd y(v.rows());
    std::vector<double> row(p());
    for (Eigen::Index j = 0; j < v.rows(); ++j) {
      for (std::size_t i = 0; i < p(); ++i) row[i] = v(j, static_cast<Eigen::Index>(i));
      y(j) = g(row);
    }
    return y;
  }

  FullSample draw(std::size_t n, std::uint64_t seed) const {
    FullSample s;
    s.V = sample(inputs, n, seed);
    s.Y = evaluate(s.V);
    return s;
  }
};

inline bool in_mask(const SubsetSpec& spec, std::size_t i) {
  return std::binary_search(spec.mask.begin(), spec.mask.end(), i);
}

/// Y = sum_i a_i V_i with V_i ~ U(0, 1).
inline AnalyticModel weighted_linear_model(std::vector<double> a) {
  require(!a.empty(), ErrorCode::invalid_argument, "linear model needs at least one coefficient");
  const std::size_t p = a.size();
  AnalyticModel m;
  m.name = "weighted_linear";
  m.inputs = InputModel(std::vector<Marginal>(p, Marginal(Uniform{0.0, 1.0})));
  m.g = [a](std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * v[i];
    return s;
  };
  m.g1 = [a](const SubsetSpec& spec, std::span<const double> x) {
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += in_mask(spec, i) ? a[i] * x[k++] : 0.5 * a[i];
    return s;
  };
  m.g2 = [a, g1 = m.g1](const SubsetSpec& spec, std::span<const double> x) {
    const double c = g1(spec, x);
    double rest = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!in_mask(spec, i)) rest += a[i] * a[i] / 12.0;
    return c * c + rest;
  };
  double sum = 0.0;
  double sq = 0.0;
  for (double ai : a) {
    sum += ai;
    sq += ai * ai;
  }
  m.mean_y = 0.5 * sum;
  m.var_y = sq / 12.0;
  m.second_moment_g1 = [a, mean = m.mean_y](const SubsetSpec& spec) {
    double v = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (in_mask(spec, i)) v += a[i] * a[i] / 12.0;
    return v + mean * mean;
  };
  return m;
}

inline AnalyticModel linear_model(std::size_t p) {
  auto m = weighted_linear_model(std::vector<double>(p, 1.0));
  m.name = "linear";
  return m;
}

/// Y = alpha V_1 + V_2 + ... + V_p.
inline AnalyticModel weighted_linear_model(double alpha, std::size_t p) {
  require(p >= 1, ErrorCode::invalid_argument, "weighted linear model needs p >= 1");
  std::vector<double> a(p, 1.0);
  a[0] = alpha;
  return weighted_linear_model(std::move(a));
}

/// Y = sin V1 + a sin^2 V2 + b V3^4 sin V1 on [-pi, pi]^3.
inline AnalyticModel ishigami_model(double a = 7.0, double b = 0.1) {
  constexpr double pi = std::numbers::pi;
  const double pi4 = std::pow(pi, 4);
  const double pi8 = std::pow(pi, 8);
  const double e_c = 1.0 + b * pi4 / 5.0;                               // E[1 + b V3^4]
  const double e_c2 = 1.0 + 2.0 * b * pi4 / 5.0 + b * b * pi8 / 9.0;  // E[(1 + b V3^4)^2]

  AnalyticModel m;
  m.name = "ishigami";
  m.inputs = InputModel(std::vector<Marginal>(3, Marginal(Uniform{-pi, pi})));
  m.g = [a, b](std::span<const double> v) {
    const double s2 = std::sin(v[1]);
    return std::sin(v[0]) + a * s2 * s2 + b * std::pow(v[2], 4) * std::sin(v[0]);
  };

  // Conditional moments of the three factors s1 = sin V1, c = 1 + b V3^4, q = sin^2 V2.
  struct Parts {
    double s1, s1sq, c, csq, q, qsq;
  };
  auto parts = [=](const SubsetSpec& spec, std::span<const double> x) {
    Parts r{0.0, 0.5, e_c, e_c2, 0.5, 0.375};
    std::size_t k = 0;
    if (in_mask(spec, 0)) {
      r.s1 = std::sin(x[k++]);
      r.s1sq = r.s1 * r.s1;
    }
    if (in_mask(spec, 1)) {
      const double s = std::sin(x[k++]);
      r.q = s * s;
      r.qsq = r.q * r.q;
    }
    if (in_mask(spec, 2)) {
      r.c = 1.0 + b * std::pow(x[k++], 4);
      r.csq = r.c * r.c;
    }
    return r;
  };
  m.g1 = [=](const SubsetSpec& spec, std::span<const double> x) {
    const auto r = parts(spec, x);
    return r.s1 * r.c + a * r.q;
  };
  m.g2 = [=](const SubsetSpec& spec, std::span<const double> x) {
    const auto r = parts(spec, x);
    return r.s1sq * r.csq + 2.0 * a * r.s1 * r.c * r.q + a * a * r.qsq;
  };
  m.mean_y = 0.5 * a;
  m.var_y = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi8 / 18.0 + 0.5;
  m.second_moment_g1 = [=](const SubsetSpec& spec) {
    double v = a * a * (in_mask(spec, 1) ? 0.375 : 0.25);
    if (in_mask(spec, 0)) v += 0.5 * (in_mask(spec, 2) ? e_c2 : e_c * e_c);
    return v;
  };
  return m;
}

/// Y = V1 V2 on [0, 1]^2.
inline AnalyticModel product_model() {
  AnalyticModel m;
  m.name = "product";
  m.inputs = InputModel(std::vector<Marginal>(2, Marginal(Uniform{0.0, 1.0})));
  m.g = [](std::span<const double> v) { return v[0] * v[1]; };
  m.g1 = [](const SubsetSpec& spec, std::span<const double> x) {
    double r = 1.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < 2; ++i) r *= in_mask(spec, i) ? x[k++] : 0.5;
    return r;
  };
  m.g2 = [](const SubsetSpec& spec, std::span<const double> x) {
    double r = 1.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < 2; ++i) {
      if (in_mask(spec, i)) {
        r *= x[k] * x[k];
        ++k;
      } else {
        r /= 3.0;
      }
    }
    return r;
  };
  m.mean_y = 0.25;
  m.var_y = 7.0 / 144.0;
  m.second_moment_g1 = [](const SubsetSpec& spec) {
    double r = 1.0;
    for (std::size_t i = 0; i < 2; ++i) r *= in_mask(spec, i) ? 1.0 / 3.0 : 0.25;
    return r;
  };
  return m;
}

/// Y = exp(V1) + V2 on [0, 1]^2; smooth but not polynomial, so kernel bias
/// does not vanish at any order.
inline AnalyticModel exponential_model() {
  const double e = std::numbers::e;
  const double e1 = e - 1.0;                // E[exp V]
  const double e2 = 0.5 * (e * e - 1.0);    // E[exp 2V]
  AnalyticModel m;
  m.name = "exponential";
  m.inputs = InputModel(std::vector<Marginal>(2, Marginal(Uniform{0.0, 1.0})));
  m.g = [](std::span<const double> v) { return std::exp(v[0]) + v[1]; };
  auto parts = [=](const SubsetSpec& spec, std::span<const double> x) {
    std::size_t k = 0;
    double u = e1, u2 = e2, w = 0.5, w2 = 1.0 / 3.0;
    if (in_mask(spec, 0)) {
      u = std::exp(x[k++]);
      u2 = u * u;
    }
    if (in_mask(spec, 1)) {
      w = x[k++];
      w2 = w * w;
    }
    return std::array<double, 4>{u, u2, w, w2};
  };
  m.g1 = [=](const SubsetSpec& spec, std::span<const double> x) {
    const auto r = parts(spec, x);
    return r[0] + r[2];
  };
  m.g2 = [=](const SubsetSpec& spec, std::span<const double> x) {
    const auto r = parts(spec, x);
    return r[1] + 2.0 * r[0] * r[2] + r[3];
  };
  m.mean_y = e1 + 0.5;
  m.var_y = (e2 - e1 * e1) + 1.0 / 12.0;
  m.second_moment_g1 = [=](const SubsetSpec& spec) {
    const double a = in_mask(spec, 0) ? e2 : e1 * e1;
    const double b = in_mask(spec, 1) ? 1.0 / 3.0 : 0.25;
    return a + 2.0 * e1 * 0.5 + b;
  };
  return m;
}

/// Linear (p = 3), weighted linear (alpha = 2, p = 3), Ishigami, product.
inline std::vector<AnalyticModel> builtin_models() {
  auto wl = weighted_linear_model(2.0, 3);
  return {linear_model(3), wl, ishigami_model(), product_model()};
}

/// Looks up a model by name; "linear" and "weighted_linear" accept p and alpha.
inline AnalyticModel model_by_name(const std::string& name, std::size_t p = 3, double alpha = 2.0) {
  if (name == "linear") return linear_model(p);
  if (name == "weighted_linear") return weighted_linear_model(alpha, p);
  if (name == "ishigami") return ishigami_model();
  if (name == "product") return product_model();
  if (name == "exponential") return exponential_model();
  throw Error(ErrorCode::invalid_argument, "unknown model '" + name + "'", "model");
}

}  // namespace ksobol
