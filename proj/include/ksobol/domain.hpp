#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ksobol/error.hpp"

namespace ksobol {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const noexcept { return hi - lo; }
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Axis-aligned box [B_1, C_1] x ... x [B_d, C_d].
class Domain {
 public:
  Domain() = default;
  Domain(std::vector<double> lower, std::vector<double> upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    require(!lower_.empty(), ErrorCode::invalid_argument, "domain must have dimension >= 1");
    require(lower_.size() == upper_.size(), ErrorCode::dimension_mismatch,
            "domain lower and upper bounds differ in length");
    for (std::size_t i = 0; i < lower_.size(); ++i) {
      if (!(std::isfinite(lower_[i]) && std::isfinite(upper_[i]) && lower_[i] < upper_[i])) {
        throw Error(ErrorCode::invalid_argument,
                    "domain axis " + std::to_string(i) + " must satisfy lower < upper");
      }
    }
  }

  static Domain unit_cube(std::size_t d) {
    return Domain(std::vector<double>(d, 0.0), std::vector<double>(d, 1.0));
  }

  std::size_t dim() const noexcept { return lower_.size(); }
  std::span<const double> lower() const noexcept { return lower_; }
  std::span<const double> upper() const noexcept { return upper_; }
  double midpoint(std::size_t i) const { return 0.5 * (lower_[i] + upper_[i]); }
  double width(std::size_t i) const { return upper_[i] - lower_[i]; }

  double min_width() const {
    double w = width(0);
    for (std::size_t i = 1; i < dim(); ++i) w = std::min(w, width(i));
    return w;
  }

  bool contains(std::span<const double> x) const {
    if (x.size() != dim()) return false;
    for (std::size_t i = 0; i < dim(); ++i)
      if (!(x[i] >= lower_[i] && x[i] <= upper_[i])) return false;
    return true;
  }

  /// Sub-box on the given coordinates.
  Domain restrict(std::span<const std::size_t> axes) const {
    std::vector<double> lo;
    std::vector<double> hi;
    for (auto a : axes) {
      require(a < dim(), ErrorCode::invalid_argument, "domain restriction: axis out of range");
      lo.push_back(lower_[a]);
      hi.push_back(upper_[a]);
    }
    return Domain(std::move(lo), std::move(hi));
  }

  friend bool operator==(const Domain&, const Domain&) = default;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

/// Diagonal of the mirror map A_x, entries in {-1, +1}. A_x is its own inverse.
struct MirrorSigns {
  std::vector<int> signs;
  friend bool operator==(const MirrorSigns&, const MirrorSigns&) = default;
};

/// +1 on the lower half of each axis (midpoint included), -1 on the open upper half.
inline int sigma_axis(double lower, double upper, double x) noexcept {
  return (x > 0.5 * (lower + upper) && x < upper) || x == upper ? -1 : 1;
}

inline MirrorSigns sigma_at(const Domain& domain, std::span<const double> x) {
  if (!domain.contains(x)) {
    throw Error(ErrorCode::domain_violation, "sigma_at: point lies outside the domain");
  }
  MirrorSigns s;
  s.signs.resize(domain.dim());
  for (std::size_t i = 0; i < domain.dim(); ++i)
    s.signs[i] = sigma_axis(domain.lower()[i], domain.upper()[i], x[i]);
  return s;
}

inline std::vector<double> apply_mirror(const MirrorSigns& signs, std::span<const double> u) {
  require(signs.signs.size() == u.size(), ErrorCode::dimension_mismatch,
          "apply_mirror: dimension mismatch");
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = signs.signs[i] * u[i];
  return out;
}

/// True iff the reflected support x + A_x (h [0, 1/2]^d) stays in the domain
/// for every x, i.e. h/2 <= min_i (C_i - B_i)/2.
inline bool check_mirror_condition(const Domain& domain, double h) {
  if (!(h > 0.0)) return false;
  return 0.5 * h <= 0.5 * domain.min_width();
}

}  // namespace ksobol
