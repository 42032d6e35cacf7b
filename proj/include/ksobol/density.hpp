#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

#include "ksobol/domain.hpp"
#include "ksobol/error.hpp"
#include "ksobol/estimator.hpp"
#include "ksobol/kernel.hpp"
#include "ksobol/summation.hpp"

namespace ksobol {

enum class DensityKind { uniform_max, beta_moment, mirror_kde };

/// Estimated input density. `eval` never returns less than `floor` at a
/// point it accepts; the total mass after clipping or flooring may differ
/// from one.
struct DensityEstimate {
  DensityKind kind = DensityKind::uniform_max;
  std::function<double(std::span<const double>)> eval;
  Domain domain;
  double floor = kDensityFloor;

  double theta_hat = std::numeric_limits<double>::quiet_NaN();  // uniform_max
  double a_hat = std::numeric_limits<double>::quiet_NaN();      // beta_moment
  double b = std::numeric_limits<double>::quiet_NaN();
  bool fallback = false;  // beta_moment: constant density in use
  double h_kde = std::numeric_limits<double>::quiet_NaN();  // mirror_kde
  double eta = std::numeric_limits<double>::quiet_NaN();

  double operator()(std::span<const double> x) const { return eval(x); }

  /// Density oracle for the estimator, over this estimate's domain.
  InputDensity as_input_density() const { return InputDensity{domain, eval}; }
};

/// theta_hat = max(aux); density 1/theta_hat on [0, theta_hat].
inline DensityEstimate uniform_max_estimator(std::span<const double> aux) {
  require(!aux.empty(), ErrorCode::insufficient_sample, "uniform max estimator: auxiliary sample is empty");
  for (double v : aux) {
    require(std::isfinite(v) && v >= 0.0, ErrorCode::invalid_data,
            "uniform max estimator: values must be finite and nonnegative");
  }
  const double theta = *std::max_element(aux.begin(), aux.end());
  require(theta > 0.0, ErrorCode::invalid_data, "uniform max estimator: maximum must be positive");
  DensityEstimate est;
  est.kind = DensityKind::uniform_max;
  est.theta_hat = theta;
  est.domain = Domain({0.0}, {theta});
  est.floor = 1.0 / theta;
  est.eval = [theta](std::span<const double> x) {
    require(x.size() == 1, ErrorCode::dimension_mismatch, "uniform max density is one-dimensional");
    if (!(x[0] >= 0.0 && x[0] <= theta)) {
      throw Error(ErrorCode::domain_violation,
                  "uniform max density queried at " + std::to_string(x[0]) + " beyond theta_hat = " +
                      std::to_string(theta));
    }
    return 1.0 / theta;
  };
  return est;
}

/// eta = (2 int_0^1 sqrt(x(1-x)) dx)^{-1}.
inline constexpr double kBetaFallbackDensity = 4.0 / std::numbers::pi;

/// a_hat = b m / (1 - m) for the auxiliary mean m; Beta(a_hat, b) when
/// a_hat lies in [1, 3/2], otherwise the constant kBetaFallbackDensity.
inline DensityEstimate beta_moment_estimator(std::span<const double> aux, double b) {
  require(!aux.empty(), ErrorCode::insufficient_sample, "beta moment estimator: auxiliary sample is empty");
  require(b > 1.0 && b < 1.5, ErrorCode::invalid_argument, "beta moment estimator: b must lie in (1, 3/2)");
  for (double v : aux) {
    require(v > 0.0 && v < 1.0, ErrorCode::invalid_data, "beta moment estimator: values must lie in (0, 1)");
  }
  const double mean = compensated_mean(aux);
  require(mean < 1.0, ErrorCode::invalid_data, "beta moment estimator: mean must be < 1");

  DensityEstimate est;
  est.kind = DensityKind::beta_moment;
  est.b = b;
  est.a_hat = b * mean / (1.0 - mean);
  est.domain = Domain({0.0}, {1.0});
  est.fallback = !(est.a_hat >= 1.0 && est.a_hat <= 1.5);
  if (est.fallback) {
    est.floor = kBetaFallbackDensity;
    est.eval = [](std::span<const double> x) {
      require(x.size() == 1, ErrorCode::dimension_mismatch, "beta density is one-dimensional");
      return kBetaFallbackDensity;
    };
  } else {
    est.floor = kDensityFloor;
    const double a = est.a_hat;
    const double norm = boost::math::beta(a, b);
    est.eval = [a, b, norm](std::span<const double> x) {
      require(x.size() == 1, ErrorCode::dimension_mismatch, "beta density is one-dimensional");
      require(x[0] >= 0.0 && x[0] <= 1.0, ErrorCode::domain_violation, "beta density queried outside [0, 1]");
      const double f = std::pow(x[0], a - 1.0) * std::pow(1.0 - x[0], b - 1.0) / norm;
      return std::max(f, kDensityFloor);
    };
  }
  return est;
}

/// Mirror-corrected kernel density estimate floored at eta/2:
/// max((1/m) sum_j K_h(A_x(aux_j - x)), eta/2).
inline DensityEstimate mirror_kde(const Eigen::MatrixXd& aux, const KernelD& kernel, double h_kde, double eta,
                                  const Domain& domain) {
  require(aux.rows() >= 1, ErrorCode::insufficient_sample, "mirror KDE: auxiliary sample is empty");
  require(static_cast<std::size_t>(aux.cols()) == kernel.dim() && kernel.dim() == domain.dim(),
          ErrorCode::dimension_mismatch, "mirror KDE: sample, kernel and domain dimensions differ");
  if (!(h_kde > 0.0) || !std::isfinite(h_kde)) {
    throw Error(ErrorCode::invalid_bandwidth, "invalid bandwidth: KDE bandwidth must be positive", "h");
  }
  require(eta > 0.0 && std::isfinite(eta), ErrorCode::invalid_argument, "mirror KDE: eta must be positive");
  if (!check_mirror_condition(domain, h_kde)) {
    throw Error(ErrorCode::bandwidth_too_large, "bandwidth too large: KDE bandwidth violates the mirror condition",
                "h");
  }
  const std::size_t d = kernel.dim();
  auto pts = std::make_shared<std::vector<double>>(static_cast<std::size_t>(aux.rows()) * d);
  for (Eigen::Index j = 0; j < aux.rows(); ++j) {
    std::vector<double> row(d);
    for (std::size_t a = 0; a < d; ++a) row[a] = aux(j, static_cast<Eigen::Index>(a));
    require(domain.contains(row), ErrorCode::domain_violation,
            "mirror KDE: auxiliary row " + std::to_string(j) + " lies outside the domain");
    std::copy(row.begin(), row.end(), pts->begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(j) * d));
  }

  DensityEstimate est;
  est.kind = DensityKind::mirror_kde;
  est.h_kde = h_kde;
  est.eta = eta;
  est.floor = 0.5 * eta;
  est.domain = domain;
  const auto m = static_cast<std::size_t>(aux.rows());
  est.eval = [pts, kernel, h_kde, eta, domain, m, d](std::span<const double> x) {
    const auto s = sigma_at(domain, x);
    std::vector<double> u(d);
    CompensatedSum acc;
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t a = 0; a < d; ++a) u[a] = s.signs[a] * ((*pts)[j * d + a] - x[a]);
      acc.add(eval_scaled(kernel, u, h_kde));
    }
    return std::max(acc.value() / static_cast<double>(m), 0.5 * eta);
  };
  return est;
}

/// m^{-1/(2k+d)}, scaled by the smallest domain width.
inline double default_kde_bandwidth(std::size_t m, int order, std::size_t d, const Domain& domain) {
  require(m >= 1, ErrorCode::insufficient_sample, "KDE bandwidth: m must be >= 1");
  return domain.min_width() * std::pow(static_cast<double>(m), -1.0 / (2.0 * order + static_cast<double>(d)));
}

struct PluginMseReport {
  double mse = 0.0;    ///< mean of ((f - f_hat)/f_hat)^2
  double scale = 0.0;  ///< h^d / n
  double ratio = 0.0;  ///< mse / scale
};

/// Advisory check of the relative mean-square condition on the plug-in.
inline PluginMseReport plugin_mse_diagnostic(std::span<const double> f_true, std::span<const double> f_hat, double h,
                                             std::size_t n, std::size_t d = 1) {
  require(f_true.size() == f_hat.size() && !f_true.empty(), ErrorCode::dimension_mismatch,
          "plugin diagnostic: vectors must be nonempty and of equal length");
  require(h > 0.0 && n >= 1, ErrorCode::invalid_argument, "plugin diagnostic: h and n must be positive");
  CompensatedSum acc;
  for (std::size_t j = 0; j < f_true.size(); ++j) {
    const double r = (f_true[j] - f_hat[j]) / f_hat[j];
    acc.add(r * r);
  }
  PluginMseReport rep;
  rep.mse = acc.value() / static_cast<double>(f_true.size());
  rep.scale = std::pow(h, static_cast<double>(d)) / static_cast<double>(n);
  rep.ratio = rep.mse / rep.scale;
  return rep;
}

}  // namespace ksobol
