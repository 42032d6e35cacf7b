#pragma once

// Signed kernels of prescribed order, built from orthonormal polynomials
// against a base density and tensorized to dimension d.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ksobol/domain.hpp"
#include "ksobol/error.hpp"
#include "ksobol/quadrature.hpp"

namespace ksobol {

inline constexpr int kMaxKernelOrder = 10;

namespace detail {

inline double horner(std::span<const double> coeffs, double x) noexcept {
  double acc = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * x + coeffs[i];
  return acc;
}

/// sum_i a_i sqrt(2i+1) P_i(4x - 1), the orthonormal shifted-Legendre series
/// for the uniform density on [0, 1/2], by the three-term recurrence.
inline double legendre_half_series(std::span<const double> a, double x) noexcept {
  const double t = 4.0 * x - 1.0;
  double prev = 1.0;
  double cur = t;
  double acc = a.empty() ? 0.0 : a[0];
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (i > 1) {
      const double m = static_cast<double>(i - 1);
      const double next = ((2.0 * m + 1.0) * t * cur - m * prev) / (m + 1.0);
      prev = cur;
      cur = next;
    }
    acc += a[i] * std::sqrt(2.0 * static_cast<double>(i) + 1.0) * cur;
  }
  return acc;
}

inline std::vector<double> poly_mul(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

}  // namespace detail

/// Probability density f_0 on a bounded interval. Keeps its raw moments
/// m_0..m_{2*kMaxKernelOrder} and a discrete measure (nodes, weights*f_0)
/// that integrates polynomial-times-f_0 products of degree up to 2*kMaxKernelOrder.
class BaseDensity {
 public:
  /// Uniform on [0, 1/2]: moments (1/2)^j / (j+1), exact.
  static BaseDensity uniform_half() {
    BaseDensity b;
    b.kind_ = Kind::uniform_half;
    b.support_ = {0.0, 0.5};
    b.poly_ = std::vector<double>{2.0};
    b.density_ = [](double) { return 2.0; };
    b.moments_.resize(2 * kMaxKernelOrder + 1);
    double p = 1.0;
    for (std::size_t j = 0; j < b.moments_.size(); ++j) {
      b.moments_[j] = p / static_cast<double>(j + 1);
      p *= 0.5;
    }
    const auto rule = quad::gauss_legendre(32, 0.0, 0.5);
    b.nodes_ = rule.nodes;
    b.weights_ = rule.weights;
    for (double& w : b.weights_) w *= 2.0;
    return b;
  }

  /// Polynomial density sum_i coeffs[i] x^i restricted to `support`.
  static BaseDensity polynomial(std::vector<double> coeffs, Interval support) {
    require(!coeffs.empty(), ErrorCode::invalid_argument, "polynomial base density: no coefficients");
    auto poly = coeffs;
    BaseDensity b = from_function(
        [poly](double x) { return detail::horner(poly, x); }, support,
        /*panels=*/1, /*nodes_per_panel=*/32 + poly.size());
    b.kind_ = Kind::polynomial;
    for (std::size_t j = 0; j < b.moments_.size(); ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < coeffs.size(); ++i) {
        const double e = static_cast<double>(i + j + 1);
        m += coeffs[i] * (std::pow(support.hi, e) - std::pow(support.lo, e)) / e;
      }
      b.moments_[j] = m;
    }
    b.poly_ = std::move(coeffs);
    return b;
  }

  /// Arbitrary density handle on a bounded support. Inner products use a
  /// composite Gauss–Legendre measure (64 panels x 20 nodes).
  static BaseDensity custom(std::function<double(double)> density, Interval support) {
    return from_function(std::move(density), support, 64, 20);
  }

  bool is_uniform_half() const noexcept { return kind_ == Kind::uniform_half; }
  bool is_polynomial() const noexcept { return poly_.has_value(); }
  const std::optional<std::vector<double>>& polynomial_coeffs() const noexcept { return poly_; }

  const Interval& support() const noexcept { return support_; }
  std::span<const double> moments() const noexcept { return moments_; }
  std::span<const double> nodes() const noexcept { return nodes_; }
  /// Quadrature weights already multiplied by f_0 at the node.
  std::span<const double> weights() const noexcept { return weights_; }

  double operator()(double x) const {
    if (!support_.contains(x)) return 0.0;
    return density_(x);
  }

 private:
  enum class Kind { uniform_half, polynomial, custom };

  static BaseDensity from_function(std::function<double(double)> density, Interval support,
                                   std::size_t panels, std::size_t nodes_per_panel) {
    require(std::isfinite(support.lo) && std::isfinite(support.hi) && support.lo < support.hi,
            ErrorCode::invalid_argument, "base density support must be a bounded interval lo < hi");
    BaseDensity b;
    b.kind_ = Kind::custom;
    b.support_ = support;
    b.density_ = std::move(density);
    b.moments_.resize(2 * kMaxKernelOrder + 1);
    const auto& f = b.density_;
    for (std::size_t j = 0; j < b.moments_.size(); ++j) {
      const auto jd = static_cast<double>(j);
      b.moments_[j] = quad::adaptive([&](double x) { return std::pow(x, jd) * f(x); },
                                     support.lo, support.hi, 1e-13, 1e-300);
    }
    if (std::abs(b.moments_[0] - 1.0) > 1e-12) {
      throw Error(ErrorCode::invalid_argument,
                  "base density does not integrate to 1 (integral = " +
                      std::to_string(b.moments_[0]) + ")");
    }
    const double panel = support.width() / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
      const double lo = support.lo + panel * static_cast<double>(p);
      const auto rule = quad::gauss_legendre(nodes_per_panel, lo, lo + panel);
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double fx = f(rule.nodes[q]);
        require(fx >= 0.0 && std::isfinite(fx), ErrorCode::invalid_argument,
                "base density must be finite and nonnegative on its support");
        b.nodes_.push_back(rule.nodes[q]);
        b.weights_.push_back(rule.weights[q] * fx);
      }
    }
    return b;
  }

  Kind kind_ = Kind::custom;
  Interval support_;
  std::function<double(double)> density_;
  std::optional<std::vector<double>> poly_;
  std::vector<double> moments_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// psi_0..psi_k, orthonormal for the f_0-weighted inner product.
/// Row m of `coeffs` holds the monomial coefficients of psi_m (degree m).
struct OrthonormalBasis {
  int degree = 0;
  std::vector<std::vector<double>> coeffs;
  std::shared_ptr<const BaseDensity> base;

  double eval(int m, double x) const {
    const auto& row = coeffs.at(static_cast<std::size_t>(m));
    if (base && base->is_uniform_half()) {
      std::vector<double> unit(row.size(), 0.0);
      unit.back() = 1.0;
      return detail::legendre_half_series(unit, x);
    }
    return detail::horner(row, x);
  }
};

namespace detail {

inline double weighted_dot(std::span<const double> w, std::span<const double> a,
                           std::span<const double> b) {
  CompensatedSum acc;
  for (std::size_t q = 0; q < w.size(); ++q) acc.add(w[q] * a[q] * b[q]);
  return acc.value();
}

}  // namespace detail

/// Gram–Schmidt under the f_0 inner product, two orthogonalization passes per
/// step. The candidate at step m is x*psi_{m-1}; it spans the same space as
/// x^m modulo lower degrees, so the resulting basis is the one obtained from
/// the monomials, with far less cancellation.
inline OrthonormalBasis build_orthonormal_basis(const BaseDensity& base, int k) {
  if (k < 0 || k > kMaxKernelOrder) {
    throw Error(ErrorCode::invalid_argument,
                "kernel order must lie in [0, " + std::to_string(kMaxKernelOrder) + "], got " +
                    std::to_string(k));
  }
  const auto nodes = base.nodes();
  const auto w = base.weights();
  const std::size_t nq = nodes.size();
  const auto kk = static_cast<std::size_t>(k);

  OrthonormalBasis basis;
  basis.degree = k;
  basis.base = std::make_shared<const BaseDensity>(base);
  basis.coeffs.assign(kk + 1, {});
  if (base.is_uniform_half()) {
    // Shifted Legendre: psi_m(x) = sqrt(2m+1) sum_j (-1)^(m+j) C(m,j) C(m+j,j) (2x)^j.
    // The integer parts are exact in double for m <= kMaxKernelOrder.
    for (std::size_t m = 0; m <= kk; ++m) {
      const double s = std::sqrt(2.0 * static_cast<double>(m) + 1.0);
      auto& row = basis.coeffs[m];
      row.assign(m + 1, 0.0);
      double binom_m = 1.0;   // C(m, j)
      double binom_mj = 1.0;  // C(m + j, j)
      for (std::size_t j = 0; j <= m; ++j) {
        if (j > 0) {
          binom_m = binom_m * static_cast<double>(m - j + 1) / static_cast<double>(j);
          binom_mj = binom_mj * static_cast<double>(m + j) / static_cast<double>(j);
        }
        const double sign = ((m + j) % 2 == 0) ? 1.0 : -1.0;
        row[j] = s * sign * binom_m * binom_mj * std::ldexp(1.0, static_cast<int>(j));
      }
    }
    return basis;
  }

  std::vector<std::vector<double>> values(kk + 1, std::vector<double>(nq));

  {
    std::vector<double> one(nq, 1.0);
    const double norm2 = detail::weighted_dot(w, one, one);
    require(norm2 > 0.0, ErrorCode::degenerate_base_density, "degenerate base density");
    const double s = 1.0 / std::sqrt(norm2);
    basis.coeffs[0] = {s};
    for (std::size_t q = 0; q < nq; ++q) values[0][q] = s;
  }

  for (std::size_t m = 1; m <= kk; ++m) {
    std::vector<double> coeff(m + 1, 0.0);
    for (std::size_t a = 0; a < m; ++a) coeff[a + 1] = basis.coeffs[m - 1][a];
    std::vector<double> val(nq);
    for (std::size_t q = 0; q < nq; ++q) val[q] = nodes[q] * values[m - 1][q];
    const double start_norm2 = detail::weighted_dot(w, val, val);

    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < m; ++i) {
        const double proj = detail::weighted_dot(w, val, values[i]);
        for (std::size_t q = 0; q < nq; ++q) val[q] -= proj * values[i][q];
        for (std::size_t a = 0; a < basis.coeffs[i].size(); ++a) coeff[a] -= proj * basis.coeffs[i][a];
      }
    }
    const double norm2 = detail::weighted_dot(w, val, val);
    if (!(norm2 > 1e-13 * start_norm2)) {
      throw Error(ErrorCode::degenerate_base_density,
                  "degenerate base density: moment matrix singular at degree " + std::to_string(m));
    }
    const double s = 1.0 / std::sqrt(norm2);
    for (double& c : coeff) c *= s;
    for (double& v : val) v *= s;
    basis.coeffs[m] = std::move(coeff);
    values[m] = std::move(val);
  }
  return basis;
}

/// lambda^m: coordinates of x^m in the basis, lambda_i^m = <x^m, psi_i>.
/// Entries with i > m vanish exactly.
inline std::vector<double> monomial_coordinates(int m, const OrthonormalBasis& basis) {
  if (m < 0 || m > basis.degree) {
    throw Error(ErrorCode::invalid_argument,
                "monomial degree " + std::to_string(m) + " exceeds basis degree " +
                    std::to_string(basis.degree));
  }
  const auto nodes = basis.base->nodes();
  const auto w = basis.base->weights();
  std::vector<double> lambda(static_cast<std::size_t>(basis.degree) + 1, 0.0);
  for (int i = 0; i <= m; ++i) {
    CompensatedSum acc;
    for (std::size_t q = 0; q < nodes.size(); ++q)
      acc.add(w[q] * std::pow(nodes[q], m) * basis.eval(i, nodes[q]));
    lambda[static_cast<std::size_t>(i)] = acc.value();
  }
  return lambda;
}

/// Solves sum_i lambda_i^m c_i = delta_{m0}, m = 0..k (lower triangular).
inline std::vector<double> solve_kernel_coefficients(const OrthonormalBasis& basis) {
  const auto n = static_cast<std::size_t>(basis.degree) + 1;
  std::vector<std::vector<double>> lam(n);
  for (std::size_t m = 0; m < n; ++m) lam[m] = monomial_coordinates(static_cast<int>(m), basis);

  // Infinity-norm condition number via the explicit triangular inverse.
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t col = 0; col < n; ++col) {
    for (std::size_t m = col; m < n; ++m) {
      double acc = (m == col) ? 1.0 : 0.0;
      for (std::size_t i = col; i < m; ++i) acc -= lam[m][i] * inv[i][col];
      inv[m][col] = acc / lam[m][m];
    }
  }
  double norm_a = 0.0;
  double norm_inv = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    double ra = 0.0;
    double ri = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ra += std::abs(lam[m][i]);
      ri += std::abs(inv[m][i]);
    }
    norm_a = std::max(norm_a, ra);
    norm_inv = std::max(norm_inv, ri);
  }
  const double cond = norm_a * norm_inv;
  if (!std::isfinite(cond) || cond > 1e14) {
    throw Error(ErrorCode::ill_conditioned_basis,
                "ill-conditioned basis (condition number " + std::to_string(cond) + ")");
  }

  std::vector<double> c(n, 0.0);
  for (std::size_t m = 0; m < n; ++m) {
    CompensatedSum acc;
    acc.add(m == 0 ? 1.0 : 0.0);
    for (std::size_t i = 0; i < m; ++i) acc.add(-lam[m][i] * c[i]);
    c[m] = acc.value() / lam[m][m];
  }
  return c;
}

/// K_1(u) = (sum_i c_i psi_i(u)) f_0(u), zero off the support.
class Kernel1D {
 public:
  Kernel1D() = default;
  Kernel1D(int order, std::vector<double> poly_coeffs, std::shared_ptr<const BaseDensity> base)
      : order_(order), poly_(std::move(poly_coeffs)), base_(std::move(base)) {
    support_ = base_->support();
    if (base_->polynomial_coeffs()) full_ = detail::poly_mul(poly_, *base_->polynomial_coeffs());
  }

  int order() const noexcept { return order_; }
  const Interval& support() const noexcept { return support_; }
  std::span<const double> poly_coeffs() const noexcept { return poly_; }
  const BaseDensity& base() const noexcept { return *base_; }
  /// Monomial coefficients of K_1 on its support when f_0 is polynomial.
  std::span<const double> kernel_polynomial() const noexcept { return full_; }
  /// For the uniform base: evaluate through the basis coefficients c rather
  /// than the expanded monomials, which lose digits for k >= 8.
  void set_basis_series(std::vector<double> c) { series_ = std::move(c); }

  double operator()(double u) const {
    if (!(u >= support_.lo && u <= support_.hi)) return 0.0;
    if (!series_.empty()) return 2.0 * detail::legendre_half_series(series_, u);
    if (!full_.empty()) return detail::horner(full_, u);
    return detail::horner(poly_, u) * (*base_)(u);
  }

 private:
  int order_ = 0;
  std::vector<double> poly_;
  std::vector<double> full_;
  std::vector<double> series_;
  std::shared_ptr<const BaseDensity> base_;
  Interval support_;
};

inline Kernel1D build_kernel_1d(const BaseDensity& base, int k) {
  const auto basis = build_orthonormal_basis(base, k);
  const auto c = solve_kernel_coefficients(basis);
  std::vector<long double> wide(static_cast<std::size_t>(k) + 1, 0.0L);
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t a = 0; a < basis.coeffs[i].size(); ++a)
      wide[a] += static_cast<long double>(c[i]) * static_cast<long double>(basis.coeffs[i][a]);
  std::vector<double> poly(wide.begin(), wide.end());
  if (base.is_uniform_half()) {
    // Here c_i = psi_i(0) = (-1)^i sqrt(2i+1), so sum_i c_i psi_i has the integer
    // coefficients sum_i (2i+1) (-1)^j C(i,j) C(i+j,j) 2^j, exact in double.
    for (std::size_t j = 0; j < poly.size(); ++j) {
      double acc = 0.0;
      for (std::size_t i = j; i < poly.size(); ++i) {
        double term = static_cast<double>(2 * i + 1) * std::ldexp(1.0, static_cast<int>(j));
        for (std::size_t r = 1; r <= j; ++r)
          term = term * static_cast<double>(i - r + 1) * static_cast<double>(i + r) / static_cast<double>(r * r);
        acc += (j % 2 == 0) ? term : -term;
      }
      poly[j] = acc;
    }
  }
  Kernel1D kernel(k, std::move(poly), basis.base);
  if (base.is_uniform_half()) kernel.set_basis_series(c);
  return kernel;
}

/// Product kernel K(u) = prod_i K_1(u_i) on support^d.
class KernelD {
 public:
  KernelD() = default;
  KernelD(Kernel1D factor, std::size_t dim) : factor_(std::move(factor)), dim_(dim) {}

  const Kernel1D& factor() const noexcept { return factor_; }
  std::size_t dim() const noexcept { return dim_; }
  int order() const noexcept { return factor_.order(); }
  const Interval& support() const noexcept { return factor_.support(); }

  double operator()(std::span<const double> u) const {
    require(u.size() == dim_, ErrorCode::dimension_mismatch, "kernel evaluated at a point of wrong dimension");
    double v = 1.0;
    for (double ui : u) {
      v *= factor_(ui);
      if (v == 0.0) return 0.0;
    }
    return v;
  }

 private:
  Kernel1D factor_;
  std::size_t dim_ = 0;
};

inline KernelD tensorize(Kernel1D factor, std::size_t d) {
  require(d >= 1, ErrorCode::invalid_argument, "tensorize: dimension must be >= 1");
  return KernelD(std::move(factor), d);
}

/// K_h(x) = K(x/h) / h^d.
inline double eval_scaled(const KernelD& kernel, std::span<const double> x, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw Error(ErrorCode::invalid_bandwidth, "invalid bandwidth: h must be positive and finite");
  }
  require(x.size() == kernel.dim(), ErrorCode::dimension_mismatch, "eval_scaled: dimension mismatch");
  double v = 1.0;
  for (double xi : x) {
    v *= kernel.factor()(xi / h) / h;
    if (v == 0.0) return 0.0;
  }
  return v;
}

struct OrderReport {
  double max_moment_violation = 0.0;  ///< max over 0 < |beta| <= k of |int u^beta K|
  double mass_error = 0.0;            ///< |int K - 1|
  std::size_t nodes_per_axis = 0;
  bool passed = false;
};

/// Checks every moment 0 < |beta| <= order directly on the d-dimensional
/// kernel by tensor Gauss–Legendre quadrature, max(2k+2, 16) nodes per axis.
inline OrderReport verify_order(const KernelD& kernel, double tol) {
  const std::size_t d = kernel.dim();
  const auto k = static_cast<std::size_t>(kernel.order());
  const std::size_t count = std::max<std::size_t>(2 * k + 2, 16);
  const auto rule = quad::gauss_legendre(count, kernel.support().lo, kernel.support().hi);

  // Enumerate multi-indices with |beta| <= k.
  std::vector<std::vector<std::size_t>> betas;
  std::vector<std::size_t> beta(d, 0);
  while (true) {
    std::size_t total = 0;
    for (auto b : beta) total += b;
    if (total <= k) betas.push_back(beta);
    std::size_t axis = 0;
    while (axis < d && ++beta[axis] > k) {
      beta[axis] = 0;
      ++axis;
    }
    if (axis == d) break;
  }

  std::vector<CompensatedSum> acc(betas.size());
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> u(d);
  while (true) {
    double w = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      u[i] = rule.nodes[idx[i]];
      w *= rule.weights[idx[i]];
    }
    const double kv = w * kernel(u);
    for (std::size_t b = 0; b < betas.size(); ++b) {
      double mono = 1.0;
      for (std::size_t i = 0; i < d; ++i) mono *= std::pow(u[i], static_cast<double>(betas[b][i]));
      acc[b].add(kv * mono);
    }
    std::size_t axis = 0;
    while (axis < d && ++idx[axis] == count) {
      idx[axis] = 0;
      ++axis;
    }
    if (axis == d) break;
  }

  OrderReport report;
  report.nodes_per_axis = count;
  for (std::size_t b = 0; b < betas.size(); ++b) {
    std::size_t total = 0;
    for (auto x : betas[b]) total += x;
    if (total == 0) {
      report.mass_error = std::abs(acc[b].value() - 1.0);
    } else {
      report.max_moment_violation = std::max(report.max_moment_violation, std::abs(acc[b].value()));
    }
  }
  report.passed = report.max_moment_violation <= tol && report.mass_error <= tol;
  return report;
}

/// Serializable description; coefficients are always rebuilt from it.
struct KernelSpec {
  int order = 2;
  std::size_t dim = 1;
  // Empty means the canonical uniform base on [0, 1/2]; otherwise the
  // monomial coefficients of a polynomial base density on `custom_support`.
  std::vector<double> custom_polynomial;
  Interval custom_support{0.0, 0.5};

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline KernelD build_kernel(const KernelSpec& spec) {
  const BaseDensity base = spec.custom_polynomial.empty()
                               ? BaseDensity::uniform_half()
                               : BaseDensity::polynomial(spec.custom_polynomial, spec.custom_support);
  if (base.support().lo < 0.0 || base.support().hi > 0.5) {
    throw Error(ErrorCode::invalid_argument,
                "kernel base support must lie inside [0, 1/2] for the mirror construction");
  }
  return tensorize(build_kernel_1d(base, spec.order), spec.dim);
}

}  // namespace ksobol
