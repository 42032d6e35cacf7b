#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ksobol/baselines.hpp"
#include "ksobol/density.hpp"
#include "ksobol/domain.hpp"
#include "ksobol/error.hpp"
#include "ksobol/estimator.hpp"
#include "ksobol/kernel.hpp"
#include "ksobol/models.hpp"
#include "ksobol/parallel.hpp"
#include "ksobol/random.hpp"

namespace ksobol {

inline constexpr std::size_t kBruteForceMaxRows = 10'000;

/// Naive double loop over unordered pairs, straight from the definition,
/// with plain summation. Used only as an oracle.
inline double brute_force_t(const FullSample& sample, const SubsetSpec& spec, const KernelD& kernel, double h,
                            const InputDensity& density) {
  if (sample.n() > kBruteForceMaxRows) {
    throw Error(ErrorCode::guard_exceeded, "brute force guard exceeded: n = " + std::to_string(sample.n()) +
                                               " > " + std::to_string(kBruteForceMaxRows));
  }
  sample.validate();
  spec.validate(sample.p());
  const std::size_t n = sample.n();
  const std::size_t d = spec.dim();
  auto point = [&](std::size_t j) {
    std::vector<double> x(d);
    for (std::size_t a = 0; a < d; ++a)
      x[a] = sample.V(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(spec.mask[a]));
    return x;
  };
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto xj = point(j);
    const auto sj = sigma_at(density.domain, xj);
    const double fj = density.f(xj);
    for (std::size_t jp = j + 1; jp < n; ++jp) {
      const auto xp = point(jp);
      const auto sp = sigma_at(density.domain, xp);
      const double fp = density.f(xp);
      std::vector<double> diff(d);
      for (std::size_t a = 0; a < d; ++a) diff[a] = xp[a] - xj[a];
      const double k1 = eval_scaled(kernel, apply_mirror(sj, diff), h);
      for (std::size_t a = 0; a < d; ++a) diff[a] = -diff[a];
      const double k2 = eval_scaled(kernel, apply_mirror(sp, diff), h);
      const double yy = sample.Y(static_cast<Eigen::Index>(j)) * sample.Y(static_cast<Eigen::Index>(jp));
      total += 0.5 * yy * (k1 / fj + k2 / fp);
    }
  }
  const auto nd = static_cast<double>(n);
  return total / (0.5 * nd * (nd - 1.0));
}

enum class EstimatorKind { kernel, pf, nn, rank };

inline std::string to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::kernel: return "kernel";
    case EstimatorKind::pf: return "pf";
    case EstimatorKind::nn: return "nn";
    case EstimatorKind::rank: return "rank";
  }
  return "unknown";
}

inline EstimatorKind estimator_from_string(const std::string& s) {
  if (s == "kernel") return EstimatorKind::kernel;
  if (s == "pf") return EstimatorKind::pf;
  if (s == "nn") return EstimatorKind::nn;
  if (s == "rank") return EstimatorKind::rank;
  throw Error(ErrorCode::invalid_argument, "unknown estimator '" + s + "'", "estimators");
}

/// h = c n^{-gamma}, a fixed h, or the library default for the kernel order.
struct BandwidthRule {
  enum class Mode { fixed, power, default_rule };
  Mode mode = Mode::power;
  double h = 0.0;
  double c = 1.0;
  double gamma = 0.4;

  double at(std::size_t n, int order, std::size_t d, const Domain& domain) const {
    switch (mode) {
      case Mode::fixed: return h;
      case Mode::power: return c * std::pow(static_cast<double>(n), -gamma);
      case Mode::default_rule: return default_bandwidth(n, order, d, domain);
    }
    return h;
  }
};

enum class DensityMode { exact, uniform_max };

struct ExperimentPlan {
  AnalyticModel model;
  std::vector<SubsetSpec> masks;
  std::vector<std::size_t> n_grid;
  BandwidthRule h_rule;
  int kernel_order = 2;
  std::vector<std::uint64_t> seeds;
  std::vector<EstimatorKind> estimators{EstimatorKind::kernel};
  double ci_level = 0.95;
  double variance_scale = 1.0;  ///< multiplies the plug-in variance; 1 leaves CIs as estimated
  DensityMode density = DensityMode::exact;
  VarianceCorrection correction = VarianceCorrection::finite_sample;
  std::size_t threads = 1;

  void validate() const {
    require(!masks.empty(), ErrorCode::invalid_argument, "experiment plan: no masks");
    for (const auto& m : masks) m.validate(model.p());
    require(!n_grid.empty(), ErrorCode::invalid_argument, "experiment plan: empty n grid");
    require(std::is_sorted(n_grid.begin(), n_grid.end()) &&
                std::adjacent_find(n_grid.begin(), n_grid.end()) == n_grid.end(),
            ErrorCode::invalid_argument, "experiment plan: n grid must be strictly ascending");
    require(n_grid.front() >= 2, ErrorCode::insufficient_sample, "experiment plan: n must be >= 2");
    require(!seeds.empty(), ErrorCode::invalid_argument, "experiment plan: no seeds");
    require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(), ErrorCode::invalid_argument,
            "experiment plan: seeds must be distinct");
    require(!estimators.empty(), ErrorCode::invalid_argument, "experiment plan: no estimators");
    require(variance_scale > 0.0, ErrorCode::invalid_argument, "experiment plan: variance scale must be positive");
  }
};

/// One estimate from one seed.
struct SeedRecord {
  EstimatorKind estimator = EstimatorKind::kernel;
  std::size_t mask_index = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double h = std::numeric_limits<double>::quiet_NaN();
  double estimate = 0.0;
  double t_hat = std::numeric_limits<double>::quiet_NaN();
  double variance = std::numeric_limits<double>::quiet_NaN();  ///< plug-in variance, kernel only
  double var_t = std::numeric_limits<double>::quiet_NaN();
  bool covered = false;
  double theta_hat = std::numeric_limits<double>::quiet_NaN();
};

struct StudyRow {
  std::string model;
  std::string mask;  ///< 1-based, comma separated
  EstimatorKind estimator = EstimatorKind::kernel;
  std::size_t n = 0;
  double h = std::numeric_limits<double>::quiet_NaN();
  std::size_t seed_count = 0;
  double mean = 0.0;
  double rmse = 0.0;
  double var_scaled_by_n = 0.0;
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double theoretical_variance = std::numeric_limits<double>::quiet_NaN();
  double efficient_bound = std::numeric_limits<double>::quiet_NaN();
  std::size_t budget = 0;  ///< model evaluations per replicate
};

struct SlopeFit {
  std::string mask;
  EstimatorKind estimator = EstimatorKind::kernel;
  double slope = std::numeric_limits<double>::quiet_NaN();
};

struct StudyTable {
  std::vector<StudyRow> rows;
  std::vector<SlopeFit> slopes;
  std::vector<SeedRecord> records;
};

inline std::string mask_label(const SubsetSpec& spec) {
  std::string s;
  for (std::size_t i = 0; i < spec.mask.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(spec.mask[i] + 1);
  }
  return s;
}

/// Least-squares slope of log(y) against log(x).
inline double log_log_slope(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::invalid_argument, "slope fit needs >= 2 points");
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace detail {

inline SeedRecord run_replicate(const ExperimentPlan& plan, const KernelD& kernel, EstimatorKind est,
                                std::size_t mask_index, std::size_t n, std::uint64_t seed) {
  const auto& model = plan.model;
  const auto& spec = plan.masks[mask_index];
  SeedRecord rec;
  rec.estimator = est;
  rec.mask_index = mask_index;
  rec.n = n;
  rec.seed = seed;
  switch (est) {
    case EstimatorKind::kernel: {
      const auto s = model.draw(n, seed);
      InputDensity density;
      if (plan.density == DensityMode::uniform_max) {
        require(spec.dim() == 1, ErrorCode::unsupported_dimension,
                "unsupported dimension: the uniform max plug-in is one-dimensional");
        const auto col = s.V.col(static_cast<Eigen::Index>(spec.mask[0]));
        const std::vector<double> aux(col.data(), col.data() + col.size());
        const auto est_density = uniform_max_estimator(aux);
        rec.theta_hat = est_density.theta_hat;
        density = est_density.as_input_density();
      } else {
        density = InputDensity::exact(model.inputs, spec);
      }
      rec.h = plan.h_rule.at(n, plan.kernel_order, spec.dim(), density.domain);
      EstimateOptions opts;
      opts.ci_level = plan.ci_level;
      opts.correction = plan.correction;
      const auto r = estimate_sobol(s, spec, kernel, rec.h, density, opts);
      rec.estimate = r.sobol;
      rec.t_hat = r.t_hat;
      rec.var_t = r.var_t;
      rec.variance = r.var_sobol * plan.variance_scale;
      const double half = normal_quantile_two_sided(plan.ci_level) * std::sqrt(rec.variance / static_cast<double>(n));
      const double truth = model.true_sobol(spec);
      rec.covered = std::abs(r.sobol - truth) <= half;
      break;
    }
    case EstimatorKind::pf:
      rec.estimate = pick_freeze_estimate(pick_freeze_design(model, spec, n, seed));
      break;
    case EstimatorKind::nn: {
      const auto a = model.draw(n, seed);
      const auto b = model.draw(n, stream_seed(seed, 0x4e4e));
      auto masked = [&](const FullSample& s) {
        PairedSample ps;
        ps.X.resize(s.V.rows(), static_cast<Eigen::Index>(spec.dim()));
        for (std::size_t k = 0; k < spec.dim(); ++k)
          ps.X.col(static_cast<Eigen::Index>(k)) = s.V.col(static_cast<Eigen::Index>(spec.mask[k]));
        ps.Y = s.Y;
        return ps;
      };
      rec.estimate = nn_sobol(masked(a), masked(b));
      break;
    }
    case EstimatorKind::rank:
      rec.estimate = rank_estimate(model.draw(n, seed), spec);
      break;
  }
  return rec;
}

inline std::size_t budget_of(EstimatorKind e, std::size_t n) {
  return (e == EstimatorKind::pf || e == EstimatorKind::nn) ? 2 * n : n;
}

}  // namespace detail

/// Runs every (mask, estimator, n, seed) replicate and summarizes per cell.
inline StudyTable run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  const auto kernel = tensorize(build_kernel_1d(BaseDensity::uniform_half(), plan.kernel_order), 1);
  StudyTable table;
  for (std::size_t mi = 0; mi < plan.masks.size(); ++mi) {
    const auto& spec = plan.masks[mi];
    const auto kd = tensorize(kernel.factor(), spec.dim());
    const double truth = plan.model.true_sobol(spec);
    for (const auto est : plan.estimators) {
      std::vector<double> ns;
      std::vector<double> rmses;
      for (const std::size_t n : plan.n_grid) {
        std::vector<SeedRecord> recs(plan.seeds.size());
        parallel_for(plan.seeds.size(), plan.threads, [&](std::size_t b, std::size_t e) {
          for (std::size_t s = b; s < e; ++s) recs[s] = detail::run_replicate(plan, kd, est, mi, n, plan.seeds[s]);
        });
        StudyRow row;
        row.model = plan.model.name;
        row.mask = mask_label(spec);
        row.estimator = est;
        row.n = n;
        row.h = recs.front().h;
        row.seed_count = recs.size();
        row.budget = detail::budget_of(est, n);
        const auto r = static_cast<double>(recs.size());
        CompensatedSum sum;
        CompensatedSum sq_err;
        std::size_t covered = 0;
        for (const auto& rec : recs) {
          sum.add(rec.estimate);
          sq_err.add((rec.estimate - truth) * (rec.estimate - truth));
          covered += rec.covered ? 1 : 0;
        }
        row.mean = sum.value() / r;
        row.rmse = std::sqrt(sq_err.value() / r);
        CompensatedSum var;
        for (const auto& rec : recs) var.add((rec.estimate - row.mean) * (rec.estimate - row.mean));
        row.var_scaled_by_n = recs.size() > 1 ? static_cast<double>(n) * var.value() / (r - 1.0) : 0.0;
        if (est == EstimatorKind::kernel) row.coverage = static_cast<double>(covered) / r;
        table.rows.push_back(row);
        ns.push_back(static_cast<double>(n));
        rmses.push_back(row.rmse);
        table.records.insert(table.records.end(), recs.begin(), recs.end());
      }
      if (ns.size() >= 2) table.slopes.push_back({mask_label(spec), est, log_log_slope(ns, rmses)});
    }
  }
  return table;
}

/// RMSE against the truth for each n, with the log-log slope.
inline StudyTable convergence_study(const ExperimentPlan& plan) { return run_experiment(plan); }

/// Fraction of seeds whose kernel CI at `level` covers the true index.
inline StudyTable coverage_study(ExperimentPlan plan, double level) {
  require(level > 0.0 && level < 1.0, ErrorCode::invalid_argument, "coverage level must lie in (0, 1)");
  plan.ci_level = level;
  return run_experiment(plan);
}

/// Convergence table plus limiting variances from the model oracles: the
/// kernel estimator's sigma^2 and, on every row, the efficient bound.
inline StudyTable compare_study(const ExperimentPlan& plan) {
  auto table = run_experiment(plan);
  for (auto& row : table.rows) {
    const auto it = std::find_if(plan.masks.begin(), plan.masks.end(),
                                 [&](const SubsetSpec& m) { return mask_label(m) == row.mask; });
    VarianceOracles o;
    o.model = &plan.model;
    o.spec = *it;
    const double s = plan.model.true_sobol(*it);
    row.efficient_bound = limiting_variance_sobol_efficient(o, plan.model.mean_y, plan.model.var_y, s).value;
    if (row.estimator == EstimatorKind::kernel) row.theoretical_variance = limiting_variance_kernel(o);
  }
  return table;
}

}  // namespace ksobol
