#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

#include "ksobol/domain.hpp"
#include "ksobol/error.hpp"
#include "ksobol/quadrature.hpp"
#include "ksobol/random.hpp"

namespace ksobol {

/// Callers that divide by an input density treat values at or below this as singular.
inline constexpr double kDensityFloor = 1e-12;

struct Uniform {
  double a = 0.0;
  double b = 1.0;
};

/// Beta(a, b) on [0, 1].
struct Beta {
  double a = 1.0;
  double b = 1.0;
};

struct Custom {
  std::function<double(double)> density;
  Interval support;
  std::function<double(double)> inverse_cdf;  ///< maps (0,1) onto the support
};

class Marginal {
 public:
  using Kind = std::variant<Uniform, Beta, Custom>;

  Marginal(Uniform u) : kind_(u) {  // NOLINT(google-explicit-constructor)
    require(std::isfinite(u.a) && std::isfinite(u.b) && u.a < u.b, ErrorCode::invalid_argument,
            "uniform marginal requires a < b");
  }
  Marginal(Beta b) : kind_(b) {  // NOLINT(google-explicit-constructor)
    require(b.a > 0.0 && b.b > 0.0 && std::isfinite(b.a) && std::isfinite(b.b),
            ErrorCode::invalid_argument, "beta marginal requires positive parameters");
  }
  Marginal(Custom c) : kind_(std::move(c)) {  // NOLINT(google-explicit-constructor)
    const auto& cu = std::get<Custom>(kind_);
    require(static_cast<bool>(cu.density) && static_cast<bool>(cu.inverse_cdf),
            ErrorCode::invalid_argument, "custom marginal needs a density and an inverse cdf");
    require(cu.support.lo < cu.support.hi, ErrorCode::invalid_argument,
            "custom marginal support must satisfy lo < hi");
    const double mass = quad::adaptive(cu.density, cu.support.lo, cu.support.hi, 1e-10);
    if (std::abs(mass - 1.0) > 1e-8) {
      throw Error(ErrorCode::invalid_argument,
                  "custom marginal density integrates to " + std::to_string(mass) + ", not 1");
    }
  }

  const Kind& kind() const noexcept { return kind_; }

  Interval support() const {
    if (const auto* u = std::get_if<Uniform>(&kind_)) return {u->a, u->b};
    if (std::holds_alternative<Beta>(kind_)) return {0.0, 1.0};
    return std::get<Custom>(kind_).support;
  }

  double pdf(double x) const {
    const Interval s = support();
    if (!(x >= s.lo && x <= s.hi)) return 0.0;
    if (const auto* u = std::get_if<Uniform>(&kind_)) return 1.0 / (u->b - u->a);
    if (const auto* b = std::get_if<Beta>(&kind_)) {
      // Endpoint values follow the limit of the density expression.
      if ((x == 0.0 && b->a != 1.0) || (x == 1.0 && b->b != 1.0)) {
        const double e = x == 0.0 ? b->a : b->b;
        return e > 1.0 ? 0.0 : std::numeric_limits<double>::infinity();
      }
      return std::pow(x, b->a - 1.0) * std::pow(1.0 - x, b->b - 1.0) / boost::math::beta(b->a, b->b);
    }
    return std::get<Custom>(kind_).density(x);
  }

  /// Inverse cdf at u in (0, 1).
  double quantile(double u) const {
    if (const auto* un = std::get_if<Uniform>(&kind_)) return un->a + (un->b - un->a) * u;
    if (const auto* b = std::get_if<Beta>(&kind_)) return boost::math::ibeta_inv(b->a, b->b, u);
    return std::get<Custom>(kind_).inverse_cdf(u);
  }

  double mean() const {
    if (const auto* u = std::get_if<Uniform>(&kind_)) return 0.5 * (u->a + u->b);
    if (const auto* b = std::get_if<Beta>(&kind_)) return b->a / (b->a + b->b);
    const auto& c = std::get<Custom>(kind_);
    return quad::adaptive([&](double x) { return x * c.density(x); }, c.support.lo, c.support.hi,
                          1e-10, 1e-14);
  }

 private:
  Kind kind_;
};

/// Independent inputs V_1..V_p; f_V is the product of the marginals.
class InputModel {
 public:
  InputModel() = default;
  explicit InputModel(std::vector<Marginal> marginals) : marginals_(std::move(marginals)) {
    require(!marginals_.empty(), ErrorCode::invalid_argument, "input model needs at least one marginal");
    std::vector<double> lo;
    std::vector<double> hi;
    for (const auto& m : marginals_) {
      lo.push_back(m.support().lo);
      hi.push_back(m.support().hi);
    }
    domain_ = Domain(std::move(lo), std::move(hi));
  }

  std::size_t dim() const noexcept { return marginals_.size(); }
  const std::vector<Marginal>& marginals() const noexcept { return marginals_; }
  const Marginal& marginal(std::size_t i) const { return marginals_.at(i); }
  const Domain& domain() const noexcept { return domain_; }

 private:
  std::vector<Marginal> marginals_;
  Domain domain_;
};

/// prod_{i in mask} f_{V_i}(x_i). Out-of-support coordinates give 0; an
/// empty mask gives 1.
inline double density_subset(const InputModel& model, std::span<const std::size_t> mask,
                             std::span<const double> x) {
  require(mask.size() == x.size(), ErrorCode::dimension_mismatch,
          "density_subset: mask and point differ in length");
  double f = 1.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    require(mask[i] < model.dim(), ErrorCode::invalid_argument, "density_subset: mask index out of range");
    f *= model.marginal(mask[i]).pdf(x[i]);
  }
  return f;
}

/// n x p matrix of i.i.d. rows. Column i is drawn by inverse cdf from its own
/// stream, stream_seed(seed, i), so columns are reproducible independently.
inline Eigen::MatrixXd sample(const InputModel& model, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorCode::invalid_argument, "sample: n must be >= 1");
  Eigen::MatrixXd v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.dim()));
  for (std::size_t i = 0; i < model.dim(); ++i) {
    Rng rng(seed, i);
    const auto& m = model.marginal(i);
    const Interval s = m.support();
    for (std::size_t j = 0; j < n; ++j) {
      const double x = m.quantile(rng.uniform_open());
      v(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = std::clamp(x, s.lo, s.hi);
    }
  }
  return v;
}

}  // namespace ksobol
