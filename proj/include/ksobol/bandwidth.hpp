#pragma once

// Pilot-regression bandwidth selection. A Gaussian pilot g~ is fitted once;
// its exact functional E~[g~1(X~)^2] becomes the target that the kernel
// estimator, fed with the virtual outputs g~(V_j), should reproduce.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "ksobol/error.hpp"
#include "ksobol/estimator.hpp"
#include "ksobol/inputs.hpp"
#include "ksobol/kernel.hpp"
#include "ksobol/parallel.hpp"
#include "ksobol/quadrature.hpp"
#include "ksobol/random.hpp"
#include "ksobol/summation.hpp"

namespace ksobol {

inline constexpr double kMinPilotBandwidth = 1e-3;

/// Normalization of the target double sum.
///  full:       (1/n^2) sum over all ordered pairs (j, j'), the exact value of
///              the pilot functional.
///  as_printed: (1/n^2) sum over j <= j' only.
enum class TargetNormalization { full, as_printed };

struct PilotConfig {
  std::vector<double> h0;    ///< per input, pilot Gaussian standard deviations
  std::vector<double> grid;  ///< ascending candidate bandwidths
  bool refine = false;       ///< golden-section steps around the grid minimizer
  TargetNormalization normalization = TargetNormalization::full;
  std::size_t threads = 1;
};

struct BetaTables {
  std::vector<Eigen::MatrixXd> beta_pair;    ///< one n x n matrix per masked input
  std::vector<Eigen::VectorXd> beta_single;  ///< one n-vector per unmasked input
};

namespace detail {

inline double gauss_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

inline double gauss_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double gauss_kernel(double u, double h) { return gauss_pdf(u / h) / h; }

}  // namespace detail

/// Scott-type rule h0_i = sd(V_i) n^{-1/(4+p)}, floored at kMinPilotBandwidth.
inline std::vector<double> rule_of_thumb_h0(const FullSample& sample) {
  sample.validate();
  const std::size_t n = sample.n();
  const std::size_t p = sample.p();
  std::vector<double> h0(p);
  const double rate = std::pow(static_cast<double>(n), -1.0 / (4.0 + static_cast<double>(p)));
  for (std::size_t i = 0; i < p; ++i) {
    const auto col = sample.V.col(static_cast<Eigen::Index>(i));
    std::vector<double> v(col.data(), col.data() + col.size());
    const double mean = compensated_mean(v);
    CompensatedSum acc;
    for (double x : v) acc.add((x - mean) * (x - mean));
    const double sd = std::sqrt(acc.value() / static_cast<double>(n - 1));
    if (!(sd > 0.0)) {
      throw Error(ErrorCode::degenerate_input,
                  "degenerate input: column " + std::to_string(i + 1) + " is constant, pilot bandwidth undefined");
    }
    h0[i] = std::max(sd * rate, kMinPilotBandwidth);
  }
  return h0;
}

/// int K~(a - v) K~(b - v) / f(v) dv over the marginal support.
inline double beta_pair_value(double a, double b, double h0, const Marginal& marginal) {
  const Interval s = marginal.support();
  if (const auto* u = std::get_if<Uniform>(&marginal.kind())) {
    const double width = u->b - u->a;
    const double sd = h0 / std::numbers::sqrt2;
    const double mid = 0.5 * (a + b);
    const double mass = detail::gauss_cdf((s.hi - mid) / sd) - detail::gauss_cdf((s.lo - mid) / sd);
    return width * detail::gauss_pdf((a - b) / (std::numbers::sqrt2 * h0)) / (std::numbers::sqrt2 * h0) * mass;
  }
  // K~(a - v) K~(b - v) = phi_{sqrt2 h0}(a - b) * phi_{h0/sqrt2}(v - mid): only a narrow bump
  // around the midpoint has to be integrated against 1/f.
  const double mid = 0.5 * (a + b);
  const double sd = h0 / std::numbers::sqrt2;
  const double prefactor = detail::gauss_pdf((a - b) / (std::numbers::sqrt2 * h0)) / (std::numbers::sqrt2 * h0);
  if (prefactor == 0.0) return 0.0;
  const auto integrand = [&](double v) {
    const double f = marginal.pdf(v);
    if (!(f > kDensityFloor)) return 0.0;
    return detail::gauss_kernel(v - mid, sd) / f;
  };
  const double lo = std::max(s.lo, mid - 12.0 * sd);
  const double hi = std::min(s.hi, mid + 12.0 * sd);
  if (!(hi > lo)) return 0.0;
  if (const auto* beta = std::get_if<Beta>(&marginal.kind())) {
    // 1/f behaves like t^{1 - shape} at an end of the support: not integrable once shape >= 2.
    const bool diverges = (lo == s.lo && beta->a >= 2.0) || (hi == s.hi && beta->b >= 2.0);
    if (diverges) {
      throw Error(ErrorCode::singular_density,
                  "singular density: the pilot integral of 1/f diverges near an end of the Beta support "
                  "(automatic bandwidth needs Beta shapes below 2; use a fixed or rule bandwidth)");
    }
  }
  const double split = std::clamp(mid, lo, hi);
  double total = 0.0;
  for (const auto& [x0, x1] : {std::pair{lo, split}, std::pair{split, hi}}) {
    if (!(x1 > x0)) continue;
    // 1/f may blow up only at the ends of the support.
    const bool at_edge = x0 == s.lo || x1 == s.hi;
    total += at_edge ? quad::endpoint_singular(integrand, x0, x1, 1e-9) : quad::adaptive(integrand, x0, x1, 1e-9);
  }
  return prefactor * total;
}

/// int K~(a - v) dv over the marginal support, exact for any interval.
inline double beta_single_value(double a, double h0, const Marginal& marginal) {
  const Interval s = marginal.support();
  return detail::gauss_cdf((s.hi - a) / h0) - detail::gauss_cdf((s.lo - a) / h0);
}

inline Eigen::MatrixXd compute_beta_pair(std::span<const double> v, double h0, const Marginal& marginal,
                                         std::size_t threads = 1) {
  require(h0 > 0.0, ErrorCode::invalid_bandwidth, "invalid bandwidth: pilot h0 must be positive");
  const std::size_t n = v.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j)
      for (std::size_t jp = j; jp < n; ++jp) {
        const double val = beta_pair_value(v[j], v[jp], h0, marginal);
        m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(jp)) = val;
        m(static_cast<Eigen::Index>(jp), static_cast<Eigen::Index>(j)) = val;
      }
  });
  return m;
}

inline Eigen::VectorXd compute_beta_single(std::span<const double> v, double h0, const Marginal& marginal) {
  require(h0 > 0.0, ErrorCode::invalid_bandwidth, "invalid bandwidth: pilot h0 must be positive");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t j = 0; j < v.size(); ++j) out(static_cast<Eigen::Index>(j)) = beta_single_value(v[j], h0, marginal);
  return out;
}

inline BetaTables compute_beta_tables(const FullSample& sample, const SubsetSpec& spec, const InputModel& model,
                                      std::span<const double> h0, std::size_t threads = 1) {
  spec.validate(sample.p());
  require(h0.size() == sample.p() && model.dim() == sample.p(), ErrorCode::dimension_mismatch,
          "beta tables: h0, model and sample dimensions differ");
  BetaTables t;
  for (std::size_t i = 0; i < sample.p(); ++i) {
    const auto col = sample.V.col(static_cast<Eigen::Index>(i));
    std::vector<double> v(col.data(), col.data() + col.size());
    if (std::binary_search(spec.mask.begin(), spec.mask.end(), i)) {
      t.beta_pair.push_back(compute_beta_pair(v, h0[i], model.marginal(i), threads));
    } else {
      t.beta_single.push_back(compute_beta_single(v, h0[i], model.marginal(i)));
    }
  }
  return t;
}

/// (1/n^2) sum_{j,j'} Y_j Y_j' prod_i beta_pair_i(j,j') prod_i beta_single_i(j) beta_single_i(j'),
/// over all ordered pairs or over j <= j' depending on `normalization`.
inline double target_functional(std::span<const double> y, const BetaTables& betas,
                                TargetNormalization normalization = TargetNormalization::full) {
  const std::size_t n = y.size();
  require(n >= 1, ErrorCode::insufficient_sample, "target functional: empty sample");
  for (const auto& m : betas.beta_pair)
    require(static_cast<std::size_t>(m.rows()) == n && static_cast<std::size_t>(m.cols()) == n,
            ErrorCode::dimension_mismatch, "target functional: pair table has the wrong size");
  for (const auto& s : betas.beta_single)
    require(static_cast<std::size_t>(s.size()) == n, ErrorCode::dimension_mismatch,
            "target functional: single table has the wrong size");

  std::vector<double> a(n);
  for (std::size_t j = 0; j < n; ++j) {
    double w = y[j];
    for (const auto& s : betas.beta_single) w *= s(static_cast<Eigen::Index>(j));
    a[j] = w;
  }
  CompensatedSum acc;
  for (std::size_t j = 0; j < n; ++j) {
    CompensatedSum row;
    const std::size_t start = normalization == TargetNormalization::full ? 0 : j;
    for (std::size_t jp = start; jp < n; ++jp) {
      double w = a[jp];
      for (const auto& m : betas.beta_pair) w *= m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(jp));
      row.add(w);
    }
    acc.add(a[j] * row.value());
  }
  const auto nn = static_cast<double>(n);
  return acc.value() / (nn * nn);
}

/// Pilot regression g~1 at a masked point x:
/// (1/n)(1/f_X(x)) sum_j Y_j prod_{i in u} K~(V_ij - x_i) prod_{i not in u} beta_single_i(j).
inline double pilot_g1(const FullSample& sample, const SubsetSpec& spec, const InputModel& model,
                       std::span<const double> h0, const BetaTables& betas, std::span<const double> x) {
  const double fx = density_subset(model, spec.mask, x);
  require(fx > kDensityFloor, ErrorCode::singular_density, "singular density in pilot regression");
  CompensatedSum acc;
  for (std::size_t j = 0; j < sample.n(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    double w = sample.Y(jj);
    for (std::size_t a = 0; a < spec.dim(); ++a) {
      const std::size_t i = spec.mask[a];
      w *= detail::gauss_kernel(sample.V(jj, static_cast<Eigen::Index>(i)) - x[a], h0[i]);
    }
    for (const auto& s : betas.beta_single) w *= s(jj);
    acc.add(w);
  }
  return acc.value() / (static_cast<double>(sample.n()) * fx);
}

struct MonteCarloTarget {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Independent estimate of E~[g~1(X~)^2] by drawing X~ from f_X.
inline MonteCarloTarget target_functional_monte_carlo(const FullSample& sample, const SubsetSpec& spec,
                                                      const InputModel& model, std::span<const double> h0,
                                                      const BetaTables& betas, std::size_t draws,
                                                      std::uint64_t seed) {
  require(draws >= 2, ErrorCode::invalid_argument, "Monte Carlo target needs at least two draws");
  std::vector<Marginal> sub;
  for (std::size_t i : spec.mask) sub.push_back(model.marginal(i));
  const Eigen::MatrixXd xs = ksobol::sample(InputModel(sub), draws, seed);
  CompensatedSum s1;
  CompensatedSum s2;
  std::vector<double> x(spec.dim());
  for (Eigen::Index r = 0; r < xs.rows(); ++r) {
    for (std::size_t a = 0; a < spec.dim(); ++a) x[a] = xs(r, static_cast<Eigen::Index>(a));
    const double g = pilot_g1(sample, spec, model, h0, betas, x);
    s1.add(g * g);
    s2.add(g * g * g * g);
  }
  const auto m = static_cast<double>(draws);
  MonteCarloTarget out;
  out.value = s1.value() / m;
  out.standard_error = std::sqrt(std::max(0.0, s2.value() / m - out.value * out.value) / m);
  return out;
}

/// Y~_j = (1/n)(1/f_V(V_j)) sum_{j'} Y_j' prod_i K~(V_ij' - V_ij), self term included.
inline std::vector<double> virtual_outputs(const FullSample& sample, const InputModel& model,
                                           std::span<const double> h0, std::size_t threads = 1) {
  sample.validate();
  require(h0.size() == sample.p() && model.dim() == sample.p(), ErrorCode::dimension_mismatch,
          "virtual outputs: h0, model and sample dimensions differ");
  for (double h : h0) require(h > 0.0, ErrorCode::invalid_bandwidth, "invalid bandwidth: pilot h0 must be positive");
  const std::size_t n = sample.n();
  const std::size_t p = sample.p();
  std::vector<std::size_t> all(p);
  for (std::size_t i = 0; i < p; ++i) all[i] = i;
  std::vector<double> out(n);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> v(p);
    for (std::size_t j = begin; j < end; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      for (std::size_t i = 0; i < p; ++i) v[i] = sample.V(jj, static_cast<Eigen::Index>(i));
      const double fv = density_subset(model, all, v);
      if (!(fv > kDensityFloor)) {
        throw Error(ErrorCode::singular_density,
                    "singular density (f_V <= " + std::to_string(kDensityFloor) + ") at row " + std::to_string(j));
      }
      CompensatedSum acc;
      for (std::size_t jp = 0; jp < n; ++jp) {
        const auto jpp = static_cast<Eigen::Index>(jp);
        double w = sample.Y(jpp);
        for (std::size_t i = 0; i < p; ++i) w *= detail::gauss_kernel(sample.V(jpp, static_cast<Eigen::Index>(i)) - v[i], h0[i]);
        acc.add(w);
      }
      out[j] = acc.value() / (static_cast<double>(n) * fv);
    }
  });
  return out;
}

/// 25 log-spaced bandwidths from 0.05 n^{-1/d} to the smallest domain width.
inline std::vector<double> default_bandwidth_grid(std::size_t n, std::size_t d, const Domain& domain,
                                                  std::size_t count = 25) {
  require(n >= 1 && d >= 1 && count >= 1, ErrorCode::invalid_argument, "bandwidth grid: invalid arguments");
  const double hi = domain.min_width();
  const double lo = std::min(0.05 * std::pow(static_cast<double>(n), -1.0 / static_cast<double>(d)), hi);
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    grid[i] = std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
  }
  grid.back() = hi;
  return grid;
}

struct BandwidthPoint {
  double h = 0.0;
  double t_virtual = 0.0;  ///< T~_{n,h} on the virtual outputs
  double objective = 0.0;  ///< |T~_{n,h} - target|
};

struct BandwidthSelection {
  double h_star = 0.0;
  double target = 0.0;
  double target_full = 0.0;
  double target_as_printed = 0.0;
  std::vector<double> h0;
  std::vector<BandwidthPoint> curve;     ///< grid evaluations
  std::vector<BandwidthPoint> refined;   ///< golden-section evaluations
};

/// argmin over the grid of |T~_{n,h} - target|; ties go to the smaller h.
inline BandwidthSelection select_bandwidth(const FullSample& sample, const SubsetSpec& spec, const KernelD& kernel,
                                           const PilotConfig& config, const InputModel& model) {
  sample.validate();
  spec.validate(sample.p());
  require(!config.grid.empty(), ErrorCode::invalid_argument, "bandwidth selection: grid is empty");
  require(std::is_sorted(config.grid.begin(), config.grid.end()), ErrorCode::invalid_argument,
          "bandwidth selection: grid must be ascending");
  const auto density = InputDensity::exact(model, spec);
  for (double h : config.grid) {
    if (!check_mirror_condition(density.domain, h)) {
      throw Error(ErrorCode::bandwidth_too_large,
                  "bandwidth too large: grid value " + std::to_string(h) + " violates the mirror condition", "grid");
    }
  }
  BandwidthSelection sel;
  sel.h0 = config.h0.empty() ? rule_of_thumb_h0(sample) : config.h0;
  require(sel.h0.size() == sample.p(), ErrorCode::dimension_mismatch, "bandwidth selection: h0 has the wrong length");

  // Both the target and the virtual outputs use sel.h0.
  const auto betas = compute_beta_tables(sample, spec, model, sel.h0, config.threads);
  const auto y = detail::to_vector(sample.Y);
  sel.target_full = target_functional(y, betas, TargetNormalization::full);
  sel.target_as_printed = target_functional(y, betas, TargetNormalization::as_printed);
  sel.target = config.normalization == TargetNormalization::full ? sel.target_full : sel.target_as_printed;

  FullSample virt;
  virt.V = sample.V;
  const auto yv = virtual_outputs(sample, model, sel.h0, config.threads);
  virt.Y = Eigen::Map<const Eigen::VectorXd>(yv.data(), static_cast<Eigen::Index>(yv.size()));

  auto evaluate = [&](double h) {
    BandwidthPoint pt;
    pt.h = h;
    pt.t_virtual = estimate_t(virt, spec, kernel, h, density);
    pt.objective = std::abs(pt.t_virtual - sel.target);
    return pt;
  };

  sel.curve.resize(config.grid.size());
  parallel_for(config.grid.size(), config.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) sel.curve[i] = evaluate(config.grid[i]);
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < sel.curve.size(); ++i)
    if (sel.curve[i].objective < sel.curve[best].objective) best = i;
  sel.h_star = sel.curve[best].h;
  double best_obj = sel.curve[best].objective;

  if (config.refine && sel.curve.size() >= 2) {
    double lo = sel.curve[best == 0 ? 0 : best - 1].h;
    double hi = sel.curve[std::min(best + 1, sel.curve.size() - 1)].h;
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 3; ++it) {
      const double c = hi - ratio * (hi - lo);
      const double d = lo + ratio * (hi - lo);
      const auto pc = evaluate(c);
      const auto pd = evaluate(d);
      sel.refined.push_back(pc);
      sel.refined.push_back(pd);
      for (const auto& pt : {pc, pd}) {
        if (pt.objective < best_obj || (pt.objective == best_obj && pt.h < sel.h_star)) {
          best_obj = pt.objective;
          sel.h_star = pt.h;
        }
      }
      if (pc.objective <= pd.objective) {
        hi = d;
      } else {
        lo = c;
      }
    }
  }
  return sel;
}

}  // namespace ksobol
