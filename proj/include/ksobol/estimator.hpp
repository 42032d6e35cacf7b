#pragma once

// Mirror-corrected kernel U-statistic for E[E[Y|X]^2], the plug-in Sobol'
// index, leave-one-out regression for variance plug-ins, and the delta-method
// variances used for confidence intervals.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "ksobol/domain.hpp"
#include "ksobol/error.hpp"
#include "ksobol/inputs.hpp"
#include "ksobol/kernel.hpp"
#include "ksobol/parallel.hpp"
#include "ksobol/summation.hpp"

namespace ksobol {

/// n input rows in R^p paired with n outputs.
struct FullSample {
  Eigen::MatrixXd V;
  Eigen::VectorXd Y;

  std::size_t n() const noexcept { return static_cast<std::size_t>(Y.size()); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(V.cols()); }

  void validate() const {
    require(V.rows() == Y.size(), ErrorCode::dimension_mismatch,
            "sample: input rows and outputs differ in length");
    require(n() >= 2, ErrorCode::insufficient_sample, "insufficient sample: n must be >= 2");
    require(V.allFinite(), ErrorCode::invalid_data, "sample: non-finite input value");
    require(Y.allFinite(), ErrorCode::invalid_data, "sample: non-finite output value");
  }
};

/// Nonempty set of input indices (0-based, sorted, unique) forming X.
struct SubsetSpec {
  std::vector<std::size_t> mask;

  SubsetSpec() = default;
  explicit SubsetSpec(std::vector<std::size_t> m) : mask(std::move(m)) {
    std::sort(mask.begin(), mask.end());
    mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
  }

  std::size_t dim() const noexcept { return mask.size(); }

  void validate(std::size_t p) const {
    require(!mask.empty(), ErrorCode::invalid_argument, "subset mask must be nonempty");
    require(mask.back() < p, ErrorCode::invalid_argument,
            "subset mask index " + std::to_string(mask.back()) + " out of range for p = " +
                std::to_string(p));
  }

  SubsetSpec complement(std::size_t p) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < p; ++i)
      if (!std::binary_search(mask.begin(), mask.end(), i)) out.push_back(i);
    return SubsetSpec(std::move(out));
  }

  friend bool operator==(const SubsetSpec&, const SubsetSpec&) = default;
};

/// Density of X together with its support (the mirror domain).
struct InputDensity {
  Domain domain;
  std::function<double(std::span<const double>)> f;

  static InputDensity exact(const InputModel& model, const SubsetSpec& spec) {
    spec.validate(model.dim());
    InputDensity d;
    d.domain = model.domain().restrict(spec.mask);
    d.f = [&model, mask = spec.mask](std::span<const double> x) { return density_subset(model, mask, x); };
    return d;
  }
};

struct EstimateResult {
  double t_hat = 0.0;      ///< estimate of E[E[Y|X]^2]
  double sobol = 0.0;      ///< estimate of S^X
  double var_t = 0.0;      ///< 4 tau^2 plug-in
  double var_sobol = 0.0;  ///< sigma^2 plug-in
  double ci_level = 0.95;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n_used = 0;
  double h_used = 0.0;
  double mean_y = 0.0;
  double var_y = 0.0;
};

namespace detail {

struct MaskedPoints {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> x;  // row-major n x d
  std::vector<double> fx;

  std::span<const double> row(std::size_t j) const { return {x.data() + j * d, d}; }
};

inline MaskedPoints prepare_points(const FullSample& sample, const SubsetSpec& spec, const KernelD& kernel,
                                   double h, const InputDensity& density) {
  sample.validate();
  spec.validate(sample.p());
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw Error(ErrorCode::invalid_bandwidth, "invalid bandwidth: h must be positive and finite");
  }
  require(kernel.dim() == spec.dim(), ErrorCode::dimension_mismatch,
          "kernel dimension " + std::to_string(kernel.dim()) + " does not match mask size " +
              std::to_string(spec.dim()));
  require(density.domain.dim() == spec.dim(), ErrorCode::dimension_mismatch,
          "density domain dimension does not match mask size");
  require(static_cast<bool>(density.f), ErrorCode::invalid_argument, "density oracle is empty");
  if (!check_mirror_condition(density.domain, h)) {
    throw Error(ErrorCode::bandwidth_too_large,
                "bandwidth too large: h = " + std::to_string(h) +
                    " violates the mirror condition h/2 <= min width/2 = " +
                    std::to_string(0.5 * density.domain.min_width()));
  }

  MaskedPoints pts;
  pts.n = sample.n();
  pts.d = spec.dim();
  pts.x.resize(pts.n * pts.d);
  pts.fx.resize(pts.n);
  std::vector<std::size_t> singular;
  for (std::size_t j = 0; j < pts.n; ++j) {
    for (std::size_t a = 0; a < pts.d; ++a)
      pts.x[j * pts.d + a] = sample.V(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(spec.mask[a]));
    const auto xj = pts.row(j);
    if (!density.domain.contains(xj)) {
      throw Error(ErrorCode::domain_violation,
                  "sample row " + std::to_string(j) + " lies outside the input domain");
    }
    pts.fx[j] = density.f(xj);
    if (!(pts.fx[j] > kDensityFloor) || !std::isfinite(pts.fx[j])) singular.push_back(j);
  }
  if (!singular.empty()) {
    std::string list;
    for (std::size_t i = 0; i < singular.size() && i < 20; ++i) {
      if (i) list += ", ";
      list += std::to_string(singular[i]);
    }
    if (singular.size() > 20) list += ", ...";
    throw Error(ErrorCode::singular_density,
                "singular density (f_X <= " + std::to_string(kDensityFloor) + ") at rows: " + list);
  }
  return pts;
}

struct RowSums {
  std::vector<double> r;   ///< sum_{j' != j} Y_j' K_h(A_{X_j}(X_j' - X_j))
  std::vector<double> r2;  ///< sum_{j' != j} (Y_j' K_h(A_{X_j}(X_j' - X_j)))^2
};

inline constexpr std::size_t kMomentBlock = 64;
inline constexpr std::size_t kFastPathMinRows = 4096;

/// Row sums over the reflected kernel window. Only rows whose first
/// coordinate falls in the window are visited. In one dimension with a
/// polynomial kernel and large n, whole blocks of sorted points inside the
/// window are summed through their local moments; points near the window
/// edges (including ties and the row itself) are always evaluated directly.
/// Every row is reduced in sorted order, independently of the thread split.
inline RowSums kernel_row_sums(const MaskedPoints& pts, std::span<const double> y, const KernelD& kernel, double h,
                               const Domain& domain, std::size_t threads, bool allow_fast = true) {
  const std::size_t n = pts.n;
  const std::size_t d = pts.d;
  const Kernel1D& k1 = kernel.factor();
  const Interval sup = k1.support();
  const double hd = std::pow(h, static_cast<double>(d));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pts.x[a * d] < pts.x[b * d]; });
  std::vector<double> first(n);
  for (std::size_t s = 0; s < n; ++s) first[s] = pts.x[order[s] * d];

  std::vector<int> sig(n * d);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t a = 0; a < d; ++a)
      sig[j * d + a] = sigma_axis(domain.lower()[a], domain.upper()[a], pts.x[j * d + a]);

  const auto poly = k1.kernel_polynomial();
  const bool fast = allow_fast && d == 1 && !poly.empty() && n >= kFastPathMinRows;

  // Block moments in bandwidth units: M[l] = sum Y u^l, Q[l] = sum Y^2 u^l with u = (x - c_b)/h.
  const std::size_t deg = poly.size() - (poly.empty() ? 0 : 1);
  const std::size_t nb = fast ? (n + kMomentBlock - 1) / kMomentBlock : 0;
  std::vector<double> centre(nb);
  std::vector<double> mom(nb * (deg + 1));
  std::vector<double> mom2(nb * (2 * deg + 1));
  std::vector<double> poly2;
  std::vector<std::vector<double>> binom;
  if (fast) {
    poly2 = detail::poly_mul(poly, poly);
    binom.assign(2 * deg + 1, {});
    for (std::size_t i = 0; i <= 2 * deg; ++i) {
      binom[i].assign(i + 1, 1.0);
      for (std::size_t l = 1; l < i; ++l) binom[i][l] = binom[i - 1][l - 1] + binom[i - 1][l];
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t s0 = b * kMomentBlock;
      const std::size_t s1 = std::min(n, s0 + kMomentBlock);
      centre[b] = 0.5 * (first[s0] + first[s1 - 1]);
      std::vector<CompensatedSum> m1(deg + 1);
      std::vector<CompensatedSum> m2(2 * deg + 1);
      for (std::size_t s = s0; s < s1; ++s) {
        const double u = (first[s] - centre[b]) / h;
        const double yv = y[order[s]];
        double p = 1.0;
        for (std::size_t l = 0; l <= 2 * deg; ++l) {
          if (l <= deg) m1[l].add(yv * p);
          m2[l].add(yv * yv * p);
          p *= u;
        }
      }
      for (std::size_t l = 0; l <= deg; ++l) mom[b * (deg + 1) + l] = m1[l].value();
      for (std::size_t l = 0; l <= 2 * deg; ++l) mom2[b * (2 * deg + 1) + l] = m2[l].value();
    }
  }

  RowSums out;
  out.r.assign(n, 0.0);
  out.r2.assign(n, 0.0);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> dpow(2 * deg + 1);
    for (std::size_t j = begin; j < end; ++j) {
      const double* xj = pts.x.data() + j * d;
      const int s0 = sig[j * d];
      double lo = s0 > 0 ? xj[0] + h * sup.lo : xj[0] - h * sup.hi;
      double hi = s0 > 0 ? xj[0] + h * sup.hi : xj[0] - h * sup.lo;
      const double slack = 1e-12 * (std::abs(xj[0]) + h);
      const auto b = static_cast<std::size_t>(std::lower_bound(first.begin(), first.end(), lo - slack) - first.begin());
      const auto e = static_cast<std::size_t>(std::upper_bound(first.begin(), first.end(), hi + slack) - first.begin());
      CompensatedSum acc;
      CompensatedSum acc2;
      auto direct = [&](std::size_t sb, std::size_t se) {
        for (std::size_t s = sb; s < se; ++s) {
          const std::size_t jp = order[s];
          if (jp == j) continue;
          const double* xp = pts.x.data() + jp * d;
          double kv = 1.0;
          for (std::size_t a = 0; a < d; ++a) {
            kv *= k1(sig[j * d + a] * (xp[a] - xj[a]) / h);
            if (kv == 0.0) break;
          }
          if (kv != 0.0) {
            acc.add(y[jp] * kv);
            acc2.add(y[jp] * y[jp] * kv * kv);
          }
        }
      };
      // Blocks strictly inside the window, away from both edges.
      std::size_t fb = 0;
      std::size_t fe = 0;
      if (fast) {
        const double guard = 4.0 * slack;
        const auto ib = static_cast<std::size_t>(std::upper_bound(first.begin(), first.end(), lo + guard) - first.begin());
        const auto ie = static_cast<std::size_t>(std::lower_bound(first.begin(), first.end(), hi - guard) - first.begin());
        fb = (ib + kMomentBlock - 1) / kMomentBlock;
        fe = ie / kMomentBlock;
      }
      if (fb < fe) {
        direct(b, fb * kMomentBlock);
        direct(fe * kMomentBlock, e);
        const double sg = static_cast<double>(s0);
        for (std::size_t blk = fb; blk < fe; ++blk) {
          // t = sg (x' - x)/h = sg (delta + u) with delta = (c_b - x)/h.
          const double delta = (centre[blk] - xj[0]) / h;
          dpow[0] = 1.0;
          for (std::size_t l = 1; l <= 2 * deg; ++l) dpow[l] = dpow[l - 1] * delta;
          const double* m1 = mom.data() + blk * (deg + 1);
          const double* m2 = mom2.data() + blk * (2 * deg + 1);
          double v1 = 0.0;
          double v2 = 0.0;
          double sgi = 1.0;
          for (std::size_t i = 0; i <= 2 * deg; ++i) {
            double inner1 = 0.0;
            double inner2 = 0.0;
            for (std::size_t l = 0; l <= i; ++l) {
              const double w = binom[i][l] * dpow[i - l];
              if (i <= deg) inner1 += w * m1[l];
              inner2 += w * m2[l];
            }
            if (i <= deg) v1 += poly[i] * sgi * inner1;
            v2 += poly2[i] * sgi * inner2;
            sgi *= sg;
          }
          acc.add(v1);
          acc2.add(v2);
        }
      } else {
        direct(b, e);
      }
      out.r[j] = acc.value() / hd;
      out.r2[j] = acc2.value() / (hd * hd);
    }
  });
  return out;
}

inline double mean_of(std::span<const double> v) { return compensated_mean(v); }

/// 1/n-normalized covariance.
inline double cov_n(std::span<const double> a, std::span<const double> b) {
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  CompensatedSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) acc.add((a[i] - ma) * (b[i] - mb));
  return acc.value() / static_cast<double>(a.size());
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

/// T_{n,h}: the U-statistic over unordered pairs with both mirrored kernel
/// terms, divided by the density at the anchoring point.
inline double estimate_t(const FullSample& sample, const SubsetSpec& spec, const KernelD& kernel, double h,
                         const InputDensity& density, std::size_t threads = 1) {
  const auto pts = detail::prepare_points(sample, spec, kernel, h, density);
  const auto y = detail::to_vector(sample.Y);
  const auto rs = detail::kernel_row_sums(pts, y, kernel, h, density.domain, threads);
  CompensatedSum acc;
  for (std::size_t j = 0; j < pts.n; ++j) acc.add(y[j] * rs.r[j] / pts.fx[j]);
  const auto n = static_cast<double>(pts.n);
  return acc.value() / (n * (n - 1.0));
}

/// Same statistic with an estimated density in place of f_X.
inline double estimate_t_with_density_estimate(const FullSample& sample, const SubsetSpec& spec,
                                               const KernelD& kernel, double h, const InputDensity& f_hat,
                                               std::size_t threads = 1) {
  return estimate_t(sample, spec, kernel, h, f_hat, threads);
}

/// Leave-one-out regression with, per row, the mean square of its summands
/// divided by (n-1): spread_j = (n-1)^{-2} sum_{j'} (Y_j' K_h(...)/f(X_j))^2.
struct LooRegression {
  std::vector<double> g1;
  std::vector<double> spread;
};

namespace detail {

inline LooRegression loo_from_rows(const MaskedPoints& pts, const RowSums& rs) {
  LooRegression out;
  out.g1.resize(pts.n);
  out.spread.resize(pts.n);
  const auto nm1 = static_cast<double>(pts.n - 1);
  for (std::size_t j = 0; j < pts.n; ++j) {
    out.g1[j] = rs.r[j] / (nm1 * pts.fx[j]);
    out.spread[j] = rs.r2[j] / (nm1 * nm1 * pts.fx[j] * pts.fx[j]);
  }
  return out;
}

}  // namespace detail

inline LooRegression estimate_loo_regression(const FullSample& sample, const SubsetSpec& spec,
                                             const KernelD& kernel, double h, const InputDensity& density,
                                             std::size_t threads = 1) {
  const auto pts = detail::prepare_points(sample, spec, kernel, h, density);
  const auto y = detail::to_vector(sample.Y);
  return detail::loo_from_rows(pts, detail::kernel_row_sums(pts, y, kernel, h, density.domain, threads));
}

/// Leave-one-out mirror-corrected regression g1_hat(X_j).
inline std::vector<double> estimate_g1_loo(const FullSample& sample, const SubsetSpec& spec,
                                           const KernelD& kernel, double h, const InputDensity& density,
                                           std::size_t threads = 1) {
  return estimate_loo_regression(sample, spec, kernel, h, density, threads).g1;
}

/// How Var(Y g1(X)) is estimated from the leave-one-out regression.
///  plain:         empirical variance of Y_j g1_hat(X_j).
///  finite_sample: subtracts 3/4 of the mean pair spread, leaving an estimate
///                 of the exact variance of T at this n (linear part plus the
///                 degenerate pair part).
///  asymptotic:    subtracts the whole spread, estimating tau^2 itself.
enum class VarianceCorrection { plain, finite_sample, asymptotic };

inline double correction_weight(VarianceCorrection c) noexcept {
  switch (c) {
    case VarianceCorrection::plain: return 0.0;
    case VarianceCorrection::finite_sample: return 0.75;
    case VarianceCorrection::asymptotic: return 1.0;
  }
  return 0.0;
}

/// Empirical moments entering the variance of the Sobol' plug-in.
struct VarianceMoments {
  double var_yg = 0.0;     // Var(Y g1)
  double cov_yg_y = 0.0;   // Cov(Y g1, Y)
  double cov_yg_y2 = 0.0;  // Cov(Y g1, Y^2)
  double mean_y = 0.0;
  double var_y = 0.0;
  double var_y2 = 0.0;
  double cov_y_y2 = 0.0;
};

/// Empirical mean and 1/n variance of Y, two-pass.
struct OutputMoments {
  double mean = 0.0;
  double var = 0.0;
};

inline OutputMoments output_moments(std::span<const double> y) {
  require(!y.empty(), ErrorCode::insufficient_sample, "output moments of an empty sample");
  OutputMoments m;
  m.mean = detail::mean_of(y);
  CompensatedSum acc;
  CompensatedSum acc2;
  for (double v : y) {
    acc.add((v - m.mean) * (v - m.mean));
    acc2.add(v * v);
  }
  m.var = acc.value() / static_cast<double>(y.size());
  const double second = acc2.value() / static_cast<double>(y.size());
  if (!(m.var > 1e-14 * second) || !(m.var > 0.0)) {
    throw Error(ErrorCode::degenerate_output, "degenerate output: empirical variance of Y is zero");
  }
  return m;
}

inline VarianceMoments variance_moments(std::span<const double> y, std::span<const double> g1_hat,
                                        std::span<const double> spread = {},
                                        VarianceCorrection correction = VarianceCorrection::plain) {
  require(y.size() == g1_hat.size(), ErrorCode::dimension_mismatch,
          "variance moments: outputs and g1 estimates differ in length");
  require(spread.empty() || spread.size() == y.size(), ErrorCode::dimension_mismatch,
          "variance moments: spread has the wrong length");
  const auto om = output_moments(y);
  std::vector<double> yg(y.size());
  std::vector<double> y2(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    require(std::isfinite(g1_hat[j]), ErrorCode::invalid_data, "variance moments: non-finite g1 estimate");
    yg[j] = y[j] * g1_hat[j];
    y2[j] = y[j] * y[j];
  }
  VarianceMoments m;
  m.var_yg = detail::cov_n(yg, yg);
  const double w = correction_weight(correction);
  if (w > 0.0 && !spread.empty()) {
    CompensatedSum acc;
    for (std::size_t j = 0; j < y.size(); ++j) acc.add(y2[j] * spread[j]);
    m.var_yg = std::max(0.0, m.var_yg - w * acc.value() / static_cast<double>(y.size()));
  }
  m.cov_yg_y = detail::cov_n(yg, y);
  m.cov_yg_y2 = detail::cov_n(yg, y2);
  m.mean_y = om.mean;
  m.var_y = om.var;
  m.var_y2 = detail::cov_n(y2, y2);
  m.cov_y_y2 = detail::cov_n(y, y2);
  return m;
}

/// sigma^2 in its expanded form, with S^X given.
inline double sigma2_expanded(const VarianceMoments& m, double s) {
  const double ey = m.mean_y;
  const double first = 4.0 * (m.var_yg - 2.0 * m.cov_yg_y * ey + ey * ey * m.var_y);
  const double second = 4.0 * s * (2.0 * m.cov_yg_y * ey - m.cov_yg_y2 - 2.0 * ey * ey * m.var_y + ey * m.cov_y_y2);
  const double third = s * s * (4.0 * ey * ey * m.var_y - 4.0 * ey * m.cov_y_y2 + m.var_y2);
  return std::max(0.0, (first + second + third) / (m.var_y * m.var_y));
}

/// Covariance of (2 Y g1, Y, Y^2) assembled from the same moments.
inline Eigen::Matrix3d gamma_matrix(const VarianceMoments& m) {
  Eigen::Matrix3d g;
  g << 4.0 * m.var_yg, 2.0 * m.cov_yg_y, 2.0 * m.cov_yg_y2,  //
      2.0 * m.cov_yg_y, m.var_y, m.cov_y_y2,                   //
      2.0 * m.cov_yg_y2, m.cov_y_y2, m.var_y2;
  return g;
}

/// Gradient of (x, y, z) -> (x - y^2)/(z - y^2) at (E[Y g1]... , E[Y], E[Y^2])
/// written through S and Var(Y): (1, 2 E[Y](S - 1), -S) / Var(Y).
inline Eigen::Vector3d sobol_gradient(double mean_y, double var_y, double s) {
  return Eigen::Vector3d(1.0, 2.0 * mean_y * (s - 1.0), -s) / var_y;
}

/// sigma^2 as the quadratic form of the gradient with Gamma.
inline double sigma2_quadratic(const VarianceMoments& m, double s) {
  const Eigen::Vector3d l = sobol_gradient(m.mean_y, m.var_y, s);
  return std::max(0.0, l.dot(gamma_matrix(m) * l));
}

/// 4 * empirical variance of Y_j g1_hat(X_j).
inline double asymptotic_variance_t(std::span<const double> y, std::span<const double> g1_hat) {
  require(y.size() == g1_hat.size(), ErrorCode::dimension_mismatch,
          "asymptotic_variance_t: outputs and g1 estimates differ in length");
  std::vector<double> yg(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    require(std::isfinite(g1_hat[j]), ErrorCode::invalid_data, "asymptotic_variance_t: non-finite g1 estimate");
    yg[j] = y[j] * g1_hat[j];
  }
  return std::max(0.0, 4.0 * detail::cov_n(yg, yg));
}

inline double asymptotic_variance_t(std::span<const double> y, const LooRegression& loo, VarianceCorrection c) {
  const double plain = asymptotic_variance_t(y, loo.g1);
  const double w = correction_weight(c);
  if (w == 0.0) return plain;
  CompensatedSum acc;
  for (std::size_t j = 0; j < y.size(); ++j) acc.add(y[j] * y[j] * loo.spread[j]);
  return std::max(0.0, plain - 4.0 * w * acc.value() / static_cast<double>(y.size()));
}

/// Delta-method variance of the Sobol' plug-in with every population moment
/// replaced by its empirical counterpart (1/n convention) and S^X by `sobol`.
inline double asymptotic_variance_sobol(std::span<const double> y, std::span<const double> g1_hat, double sobol) {
  return sigma2_expanded(variance_moments(y, g1_hat), sobol);
}

inline double asymptotic_variance_sobol(std::span<const double> y, const LooRegression& loo, double sobol,
                                        VarianceCorrection c) {
  return sigma2_expanded(variance_moments(y, loo.g1, loo.spread, c), sobol);
}

/// Two-sided normal quantile z_{1-(1-level)/2}.
inline double normal_quantile_two_sided(double level) {
  require(level > 0.0 && level < 1.0, ErrorCode::invalid_argument, "confidence level must lie in (0, 1)");
  const boost::math::normal_distribution<double> std_normal;
  return boost::math::quantile(std_normal, 1.0 - 0.5 * (1.0 - level));
}

struct EstimateOptions {
  double ci_level = 0.95;
  std::size_t threads = 1;
  VarianceCorrection correction = VarianceCorrection::finite_sample;
};

inline EstimateResult estimate_sobol(const FullSample& sample, const SubsetSpec& spec, const KernelD& kernel,
                                     double h, const InputDensity& density, const EstimateOptions& opts = {}) {
  require(opts.ci_level > 0.0 && opts.ci_level < 1.0, ErrorCode::invalid_argument,
          "confidence level must lie in (0, 1)");
  const auto pts = detail::prepare_points(sample, spec, kernel, h, density);
  const auto y = detail::to_vector(sample.Y);
  const auto om = output_moments(y);
  const auto rs = detail::kernel_row_sums(pts, y, kernel, h, density.domain, opts.threads);
  const auto loo = detail::loo_from_rows(pts, rs);
  const auto n = static_cast<double>(pts.n);

  CompensatedSum acc;
  for (std::size_t j = 0; j < pts.n; ++j) acc.add(y[j] * rs.r[j] / pts.fx[j]);

  EstimateResult res;
  res.t_hat = acc.value() / (n * (n - 1.0));
  res.mean_y = om.mean;
  res.var_y = om.var;
  res.sobol = (res.t_hat - om.mean * om.mean) / om.var;
  res.var_t = asymptotic_variance_t(y, loo, opts.correction);
  res.var_sobol = asymptotic_variance_sobol(y, loo, res.sobol, opts.correction);
  res.ci_level = opts.ci_level;
  const double half = normal_quantile_two_sided(opts.ci_level) * std::sqrt(res.var_sobol / n);
  res.ci_lo = res.sobol - half;
  res.ci_hi = res.sobol + half;
  res.n_used = pts.n;
  res.h_used = h;
  return res;
}

/// Total index 1 - S^{complement of i}, through estimate_sobol on the
/// complementary mask. The kernel must have dimension p - 1.
inline EstimateResult estimate_total(const FullSample& sample, std::size_t i, const KernelD& kernel, double h,
                                     const InputModel& model, const EstimateOptions& opts = {}) {
  require(sample.p() >= 2, ErrorCode::invalid_argument, "total index needs at least two inputs");
  const auto comp = SubsetSpec({i}).complement(sample.p());
  auto r = estimate_sobol(sample, comp, kernel, h, InputDensity::exact(model, comp), opts);
  r.sobol = 1.0 - r.sobol;
  const double lo = 1.0 - r.ci_hi;
  r.ci_hi = 1.0 - r.ci_lo;
  r.ci_lo = lo;
  return r;
}

struct FirstOrderResult {
  std::vector<EstimateResult> indices;
  Eigen::MatrixXd gamma;       ///< (p+2)x(p+2) covariance of (2Yg1^(1..p), Y, Y^2)
  Eigen::MatrixXd covariance;  ///< J Gamma J^T, p x p
};

/// All first-order indices from one sample plus their joint covariance.
inline FirstOrderResult estimate_first_order_all(const FullSample& sample, const KernelD& kernel, double h,
                                                 const InputModel& model, const EstimateOptions& opts = {}) {
  require(kernel.dim() == 1, ErrorCode::dimension_mismatch, "first-order estimation needs a 1-dimensional kernel");
  sample.validate();
  require(model.dim() == sample.p(), ErrorCode::dimension_mismatch, "input model dimension differs from sample");
  const std::size_t p = sample.p();
  const std::size_t n = sample.n();
  const auto y = detail::to_vector(sample.Y);
  const auto om = output_moments(y);

  FirstOrderResult out;
  std::vector<std::vector<double>> comps(p + 2, std::vector<double>(n));
  std::vector<double> diag_fix(p, 0.0);
  const double w = correction_weight(opts.correction);
  for (std::size_t i = 0; i < p; ++i) {
    const SubsetSpec spec({i});
    const auto density = InputDensity::exact(model, spec);
    out.indices.push_back(estimate_sobol(sample, spec, kernel, h, density, opts));
    const auto loo = estimate_loo_regression(sample, spec, kernel, h, density, opts.threads);
    CompensatedSum acc;
    for (std::size_t j = 0; j < n; ++j) {
      comps[i][j] = 2.0 * y[j] * loo.g1[j];
      acc.add(y[j] * y[j] * loo.spread[j]);
    }
    diag_fix[i] = 4.0 * w * acc.value() / static_cast<double>(n);
  }
  for (std::size_t j = 0; j < n; ++j) {
    comps[p][j] = y[j];
    comps[p + 1][j] = y[j] * y[j];
  }

  const auto m = static_cast<Eigen::Index>(p + 2);
  out.gamma.resize(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = a; b < m; ++b) {
      const double c = detail::cov_n(comps[static_cast<std::size_t>(a)], comps[static_cast<std::size_t>(b)]);
      out.gamma(a, b) = c;
      out.gamma(b, a) = c;
    }
  for (std::size_t i = 0; i < p; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out.gamma(ii, ii) = std::max(0.0, out.gamma(ii, ii) - diag_fix[i]);
  }

  // Jacobian of Phi(x_1..x_p, y, z) = ((x_i - y^2) / (z - y^2))_i at the estimates.
  const double ybar = om.mean;
  const double z = om.var + ybar * ybar;
  const double denom = om.var;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), m);
  for (std::size_t i = 0; i < p; ++i) {
    const double x = out.indices[i].t_hat;
    const auto ii = static_cast<Eigen::Index>(i);
    jac(ii, ii) = 1.0 / denom;
    jac(ii, static_cast<Eigen::Index>(p)) = -2.0 * ybar * (z - x) / (denom * denom);
    jac(ii, static_cast<Eigen::Index>(p + 1)) = -(x - ybar * ybar) / (denom * denom);
  }
  out.covariance = jac * out.gamma * jac.transpose();
  out.covariance = (0.5 * (out.covariance + out.covariance.transpose())).eval();
  return out;
}

/// h = c n^{-gamma} with gamma the midpoint of (1/(2k), 1/d) and c the
/// smallest domain width. Requires k > d/2.
inline double default_bandwidth(std::size_t n, int order, std::size_t d, const Domain& domain) {
  require(n >= 2, ErrorCode::insufficient_sample, "default bandwidth: n must be >= 2");
  require(d >= 1, ErrorCode::invalid_argument, "default bandwidth: dimension must be >= 1");
  if (!(2.0 * order > static_cast<double>(d))) {
    throw Error(ErrorCode::invalid_argument,
                "empty bandwidth window: kernel order " + std::to_string(order) +
                    " must exceed d/2 = " + std::to_string(0.5 * static_cast<double>(d)));
  }
  const double gamma = 0.5 * (1.0 / (2.0 * order) + 1.0 / static_cast<double>(d));
  return domain.min_width() * std::pow(static_cast<double>(n), -gamma);
}

}  // namespace ksobol
