#pragma once

// Reference estimators (Pick-Freeze, two-sample nearest neighbour, rank) and
// evaluation of the limiting variances used for efficiency comparisons.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ksobol/error.hpp"
#include "ksobol/estimator.hpp"
#include "ksobol/models.hpp"
#include "ksobol/quadrature.hpp"
#include "ksobol/random.hpp"
#include "ksobol/summation.hpp"

namespace ksobol {

struct PickFreezeSample {
  Eigen::VectorXd Y;
  Eigen::VectorXd Y_pf;
};

/// Model outputs at (X_j, W_j) and (X_j, W'_j), W' drawn from its own stream.
inline PickFreezeSample pick_freeze_design(const AnalyticModel& model, const SubsetSpec& spec, std::size_t n,
                                           std::uint64_t seed) {
  spec.validate(model.p());
  const Eigen::MatrixXd v = sample(model.inputs, n, seed);
  Eigen::MatrixXd v2 = sample(model.inputs, n, stream_seed(seed, 0x9f17));
  for (std::size_t i : spec.mask) v2.col(static_cast<Eigen::Index>(i)) = v.col(static_cast<Eigen::Index>(i));
  return {model.evaluate(v), model.evaluate(v2)};
}

inline double pick_freeze_estimate(const PickFreezeSample& pf) {
  require(pf.Y.size() == pf.Y_pf.size(), ErrorCode::dimension_mismatch, "pick-freeze: outputs differ in length");
  require(pf.Y.size() >= 2, ErrorCode::insufficient_sample, "insufficient sample: pick-freeze needs n >= 2");
  const auto n = static_cast<double>(pf.Y.size());
  CompensatedSum cross;
  CompensatedSum mid;
  CompensatedSum sq;
  for (Eigen::Index j = 0; j < pf.Y.size(); ++j) {
    const double a = pf.Y(j);
    const double b = pf.Y_pf(j);
    cross.add(a * b);
    mid.add(0.5 * (a + b));
    sq.add(0.5 * (a * a + b * b));
  }
  const double m = mid.value() / n;
  const double denom = sq.value() / n - m * m;
  if (!(denom > 0.0)) throw Error(ErrorCode::degenerate_output, "degenerate output: pick-freeze variance is zero");
  return (cross.value() / n - m * m) / denom;
}

struct PairedSample {
  Eigen::MatrixXd X;  ///< n x d
  Eigen::VectorXd Y;
};

struct NnResult {
  double value = 0.0;  ///< estimate of E[E[Y|X]^2]
  std::vector<std::size_t> neighbour;
  std::vector<std::string> warnings;
};

/// (1/n) sum_j Y2_j Y1_{NN(j)} with NN(j) the Euclidean nearest neighbour of
/// X2_j among the first sample; equal distances go to the lowest index.
inline NnResult nn_estimate(const PairedSample& first, const PairedSample& second) {
  require(first.Y.size() > 0 && second.Y.size() > 0, ErrorCode::insufficient_sample,
          "nearest-neighbour estimate needs two nonempty samples");
  require(first.X.rows() == first.Y.size() && second.X.rows() == second.Y.size(), ErrorCode::dimension_mismatch,
          "nearest-neighbour estimate: inputs and outputs differ in length");
  require(first.X.cols() == second.X.cols() && first.X.cols() >= 1, ErrorCode::dimension_mismatch,
          "nearest-neighbour estimate: samples differ in dimension");
  const auto n1 = static_cast<std::size_t>(first.Y.size());
  const auto n2 = static_cast<std::size_t>(second.Y.size());
  const auto d = static_cast<std::size_t>(first.X.cols());

  NnResult out;
  if (d >= 4) {
    out.warnings.push_back("nearest-neighbour bias is not negligible for d = " + std::to_string(d) +
                           " >= 4; the estimate is not asymptotically valid");
  }

  std::vector<std::size_t> order(n1);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return first.X(static_cast<Eigen::Index>(a), 0) < first.X(static_cast<Eigen::Index>(b), 0); });
  std::vector<double> key(n1);
  for (std::size_t s = 0; s < n1; ++s) key[s] = first.X(static_cast<Eigen::Index>(order[s]), 0);

  out.neighbour.resize(n2);
  CompensatedSum acc;
  for (std::size_t j = 0; j < n2; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    const double q0 = second.X(jj, 0);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = n1;
    auto consider = [&](std::size_t s) {
      const std::size_t idx = order[s];
      double dist = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double diff = first.X(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(a)) -
                            second.X(jj, static_cast<Eigen::Index>(a));
        dist += diff * diff;
      }
      if (dist < best || (dist == best && idx < best_idx)) {
        best = dist;
        best_idx = idx;
      }
    };
    const auto mid = static_cast<std::size_t>(std::lower_bound(key.begin(), key.end(), q0) - key.begin());
    for (std::size_t s = mid; s < n1; ++s) {
      const double dx = key[s] - q0;
      if (dx * dx > best) break;
      consider(s);
    }
    for (std::size_t s = mid; s-- > 0;) {
      const double dx = key[s] - q0;
      if (dx * dx > best) break;
      consider(s);
    }
    out.neighbour[j] = best_idx;
    acc.add(second.Y(jj) * first.Y(static_cast<Eigen::Index>(best_idx)));
  }
  out.value = acc.value() / static_cast<double>(n2);
  return out;
}

/// Sobol' index from the nearest-neighbour estimate, with mean and variance
/// of Y taken over both samples.
inline double nn_sobol(const PairedSample& first, const PairedSample& second) {
  const auto t = nn_estimate(first, second).value;
  std::vector<double> all(first.Y.data(), first.Y.data() + first.Y.size());
  all.insert(all.end(), second.Y.data(), second.Y.data() + second.Y.size());
  const auto om = output_moments(all);
  return (t - om.mean * om.mean) / om.var;
}

/// Right-neighbour rank estimate of S^X for scalar X. Rows are ordered by X,
/// equal X values by row index.
inline double rank_estimate(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::dimension_mismatch, "rank estimate: X and Y differ in length");
  require(x.size() >= 2, ErrorCode::insufficient_sample, "insufficient sample: rank estimate needs n >= 2");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  const auto om = output_moments(y);
  CompensatedSum acc;
  for (std::size_t s = 0; s + 1 < n; ++s) acc.add(y[order[s]] * y[order[s + 1]]);
  return (acc.value() / static_cast<double>(n) - om.mean * om.mean) / om.var;
}

inline double rank_estimate(const FullSample& sample, const SubsetSpec& spec) {
  sample.validate();
  spec.validate(sample.p());
  if (spec.dim() != 1) {
    throw Error(ErrorCode::unsupported_dimension, "unsupported dimension: rank estimate needs |mask| = 1");
  }
  const auto col = sample.V.col(static_cast<Eigen::Index>(spec.mask[0]));
  std::vector<double> x(col.data(), col.data() + col.size());
  return rank_estimate(x, detail::to_vector(sample.Y));
}

/// Conditional-moment oracles of an analytic model for one mask, with the
/// integration settings. Expectations run over the joint law of all inputs.
struct VarianceOracles {
  const AnalyticModel* model = nullptr;
  SubsetSpec spec;
  std::size_t nodes_per_axis = 64;
  std::size_t max_quadrature_dim = 4;
  std::size_t mc_draws = 1'000'000;
  std::uint64_t mc_seed = 20240601;
};

struct OraclePoint {
  std::span<const double> x;  // masked coordinates
  double y;
  double g1;
  double g2;
};

struct OracleExpectations {
  std::vector<double> mean;
  std::vector<double> standard_error;  ///< zero for quadrature
  bool quadrature = true;
};

/// E[F(point)] for a vector-valued F, by tensor Gauss-Legendre weighted with
/// the marginal densities when p is small, else by Monte Carlo.
inline OracleExpectations oracle_expectations(const VarianceOracles& o, std::size_t k,
                                              const std::function<void(const OraclePoint&, std::span<double>)>& f) {
  require(o.model != nullptr, ErrorCode::invalid_argument, "variance oracles need a model");
  const AnalyticModel& model = *o.model;
  o.spec.validate(model.p());
  const std::size_t p = model.p();
  const std::size_t d = o.spec.dim();
  OracleExpectations out;
  out.mean.assign(k, 0.0);
  out.standard_error.assign(k, 0.0);
  std::vector<double> v(p);
  std::vector<double> x(d);
  std::vector<double> vals(k);

  auto eval_point = [&] {
    for (std::size_t a = 0; a < d; ++a) x[a] = v[o.spec.mask[a]];
    OraclePoint pt{x, model.g(v), model.g1(o.spec, x), model.g2(o.spec, x)};
    f(pt, vals);
  };

  if (p <= o.max_quadrature_dim) {
    std::vector<quad::Rule> rules;
    for (std::size_t i = 0; i < p; ++i) {
      const auto s = model.inputs.marginal(i).support();
      auto r = quad::gauss_legendre(o.nodes_per_axis, s.lo, s.hi);
      for (std::size_t q = 0; q < r.nodes.size(); ++q) r.weights[q] *= model.inputs.marginal(i).pdf(r.nodes[q]);
      rules.push_back(std::move(r));
    }
    std::vector<CompensatedSum> acc(k);
    std::vector<std::size_t> idx(p, 0);
    const std::size_t m = o.nodes_per_axis;
    while (true) {
      double w = 1.0;
      for (std::size_t i = 0; i < p; ++i) {
        v[i] = rules[i].nodes[idx[i]];
        w *= rules[i].weights[idx[i]];
      }
      eval_point();
      for (std::size_t c = 0; c < k; ++c) acc[c].add(w * vals[c]);
      std::size_t i = 0;
      while (i < p && ++idx[i] == m) idx[i++] = 0;
      if (i == p) break;
    }
    for (std::size_t c = 0; c < k; ++c) out.mean[c] = acc[c].value();
    return out;
  }

  out.quadrature = false;
  const Eigen::MatrixXd draws = sample(model.inputs, o.mc_draws, o.mc_seed);
  std::vector<CompensatedSum> s1(k);
  std::vector<CompensatedSum> s2(k);
  for (Eigen::Index j = 0; j < draws.rows(); ++j) {
    for (std::size_t i = 0; i < p; ++i) v[i] = draws(j, static_cast<Eigen::Index>(i));
    eval_point();
    for (std::size_t c = 0; c < k; ++c) {
      s1[c].add(vals[c]);
      s2[c].add(vals[c] * vals[c]);
    }
  }
  const auto n = static_cast<double>(o.mc_draws);
  for (std::size_t c = 0; c < k; ++c) {
    out.mean[c] = s1[c].value() / n;
    const double var = std::max(0.0, s2[c].value() / n - out.mean[c] * out.mean[c]);
    out.standard_error[c] = std::sqrt(var / n);
  }
  return out;
}

struct LimitingVariance {
  double value = 0.0;
  double alternative = std::numeric_limits<double>::quiet_NaN();  ///< second printed form, if any
  double relative_gap = 0.0;
  bool quadrature = true;
};

/// sigma_T^2 = Var(g1 (2Y - g1)), cross-checked against 4 tau^2 - 3 Var(g1^2).
/// Each form is integrated from its own moments; tensor quadrature is exact
/// only up to its polynomial degree, so agreement is a genuine check.
inline LimitingVariance limiting_variance_efficient(const VarianceOracles& o) {
  const auto e = oracle_expectations(o, 6, [](const OraclePoint& pt, std::span<double> out) {
    const double a = pt.g1 * (2.0 * pt.y - pt.g1);
    out[0] = a;
    out[1] = a * a;
    out[2] = pt.y * pt.g1;
    out[3] = pt.y * pt.y * pt.g1 * pt.g1;
    out[4] = pt.g1 * pt.g1;
    out[5] = out[4] * out[4];
  });
  LimitingVariance r;
  r.quadrature = e.quadrature;
  r.value = e.mean[1] - e.mean[0] * e.mean[0];
  const double tau2 = e.mean[3] - e.mean[2] * e.mean[2];
  const double var_g1sq = e.mean[5] - e.mean[4] * e.mean[4];
  r.alternative = 4.0 * tau2 - 3.0 * var_g1sq;
  r.relative_gap = std::abs(r.value - r.alternative) / std::max(std::abs(r.value), 1e-300);
  return r;
}

/// 4 tau^2 = 4 Var(Y g1(X)).
inline double limiting_variance_t(const VarianceOracles& o) {
  const auto e = oracle_expectations(o, 2, [](const OraclePoint& pt, std::span<double> out) {
    out[0] = pt.y * pt.g1;
    out[1] = out[0] * out[0];
  });
  return 4.0 * (e.mean[1] - e.mean[0] * e.mean[0]);
}

/// sigma_D^2 = 2(E[g2^2] - E[g1^2]^2 + (E[g2 g1^2] - E[g1^4]) / 2).
inline LimitingVariance limiting_variance_nn(const VarianceOracles& o) {
  const auto e = oracle_expectations(o, 4, [](const OraclePoint& pt, std::span<double> out) {
    const double g1sq = pt.g1 * pt.g1;
    out[0] = pt.g2 * pt.g2;
    out[1] = g1sq;
    out[2] = pt.g2 * g1sq;
    out[3] = g1sq * g1sq;
  });
  LimitingVariance r;
  r.quadrature = e.quadrature;
  r.value = 2.0 * (e.mean[0] - e.mean[1] * e.mean[1] + 0.5 * (e.mean[2] - e.mean[3]));
  return r;
}

/// sigma_min^2 = Var(2E[Y](1 - S) Y + S Y^2 + g1 (g1 - 2Y)) / Var(Y)^2.
inline LimitingVariance limiting_variance_sobol_efficient(const VarianceOracles& o, double mean_y, double var_y,
                                                          double s_x) {
  require(var_y > 0.0, ErrorCode::degenerate_output, "degenerate output: Var(Y) must be positive");
  const auto e = oracle_expectations(o, 2, [&](const OraclePoint& pt, std::span<double> out) {
    const double z = 2.0 * mean_y * (1.0 - s_x) * pt.y + s_x * pt.y * pt.y + pt.g1 * (pt.g1 - 2.0 * pt.y);
    out[0] = z;
    out[1] = z * z;
  });
  LimitingVariance r;
  r.quadrature = e.quadrature;
  r.value = (e.mean[1] - e.mean[0] * e.mean[0]) / (var_y * var_y);
  return r;
}

/// Population moments behind the kernel estimator's delta-method variance.
inline VarianceMoments population_variance_moments(const VarianceOracles& o) {
  const auto e = oracle_expectations(o, 8, [](const OraclePoint& pt, std::span<double> out) {
    const double yg = pt.y * pt.g1;
    const double y2 = pt.y * pt.y;
    out[0] = yg;
    out[1] = yg * yg;
    out[2] = yg * pt.y;
    out[3] = yg * y2;
    out[4] = pt.y;
    out[5] = y2;
    out[6] = y2 * y2;
    out[7] = y2 * pt.y;
  });
  const auto& m = e.mean;
  VarianceMoments r;
  r.var_yg = m[1] - m[0] * m[0];
  r.cov_yg_y = m[2] - m[0] * m[4];
  r.cov_yg_y2 = m[3] - m[0] * m[5];
  r.mean_y = m[4];
  r.var_y = m[5] - m[4] * m[4];
  r.var_y2 = m[6] - m[5] * m[5];
  r.cov_y_y2 = m[7] - m[4] * m[5];
  return r;
}

/// Limiting variance of the kernel Sobol' estimator with true g1 and S^X.
inline double limiting_variance_kernel(const VarianceOracles& o) {
  return sigma2_expanded(population_variance_moments(o), o.model->true_sobol(o.spec));
}

}  // namespace ksobol
