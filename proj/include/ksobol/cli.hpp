#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ksobol/bandwidth.hpp"
#include "ksobol/density.hpp"
#include "ksobol/error.hpp"
#include "ksobol/estimator.hpp"
#include "ksobol/io.hpp"
#include "ksobol/models.hpp"
#include "ksobol/testbed.hpp"

namespace ksobol::cli {

struct InputSpec {
  std::string csv;  ///< nonempty selects the CSV source
  std::string model = "linear";
  std::size_t p = 3;
  double alpha = 2.0;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
};

struct BandwidthSpec {
  enum class Mode { fixed, automatic, rule, default_rule };
  Mode mode = Mode::default_rule;
  double h = 0.0;
  double c = 1.0;
  double gamma = 0.4;
  std::size_t grid_size = 25;
  bool refine = false;
  TargetNormalization normalization = TargetNormalization::full;
  std::size_t mc_draws = 0;  ///< > 0 adds a Monte Carlo estimate of the target
};

struct DensitySpec {
  enum class Mode { exact, uniform_max, beta_moment, mirror_kde };
  Mode mode = Mode::exact;
  double b = 1.25;             ///< beta_moment shape
  std::size_t m = 1000;        ///< auxiliary sample size
  std::uint64_t aux_seed = 7;  ///< auxiliary sample seed
  double h = 0.0;              ///< mirror_kde bandwidth; 0 picks the default
  double eta = 0.0;            ///< mirror_kde floor parameter; no default, must be given
};

struct StudySpec {
  std::vector<std::size_t> n_grid{500, 1000, 2000};
  std::size_t seeds = 20;
  std::uint64_t seed_start = 1;
  std::vector<std::string> estimators{"kernel"};
  double variance_scale = 1.0;
};

struct RunConfig {
  std::string command = "estimate";
  InputSpec input;
  std::optional<InputModel> marginals;  ///< input law for CSV data; unit cube when absent
  std::vector<std::size_t> mask{1};     ///< 1-based
  KernelSpec kernel;
  BandwidthSpec bandwidth;
  DensitySpec density;
  VarianceCorrection correction = VarianceCorrection::finite_sample;
  StudySpec study;
  double ci_level = 0.95;
  std::size_t threads = 1;
  std::string output;           ///< empty: KSOBOL_OUTPUT_DIR/<command>.<format>, else stdout
  std::string format = "json";  ///< json or csv
};

inline const std::set<std::string>& commands() {
  static const std::set<std::string> c{"estimate", "bandwidth", "convergence", "coverage", "compare"};
  return c;
}

namespace detail {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<BandwidthSpec::Mode> kBandwidthModes[] = {{BandwidthSpec::Mode::fixed, "fixed"},
                                                                    {BandwidthSpec::Mode::automatic, "auto"},
                                                                    {BandwidthSpec::Mode::rule, "rule"},
                                                                    {BandwidthSpec::Mode::default_rule, "default"}};
inline constexpr EnumName<DensitySpec::Mode> kDensityModes[] = {{DensitySpec::Mode::exact, "exact"},
                                                                {DensitySpec::Mode::uniform_max, "uniform_max"},
                                                                {DensitySpec::Mode::beta_moment, "beta_moment"},
                                                                {DensitySpec::Mode::mirror_kde, "mirror_kde"}};
inline constexpr EnumName<VarianceCorrection> kCorrections[] = {{VarianceCorrection::plain, "plain"},
                                                                {VarianceCorrection::finite_sample, "finite_sample"},
                                                                {VarianceCorrection::asymptotic, "asymptotic"}};
inline constexpr EnumName<TargetNormalization> kNormalizations[] = {{TargetNormalization::full, "full"},
                                                                    {TargetNormalization::as_printed, "as_printed"}};

template <class E, std::size_t N>
std::string name_of(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "unknown";
}

template <class E, std::size_t N>
E parse_enum(const EnumName<E> (&table)[N], const std::string& s, const std::string& field) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string allowed;
  for (const auto& e : table) allowed += (allowed.empty() ? "" : ", ") + std::string(e.name);
  throw Error(ErrorCode::schema_error, field + ": unknown value '" + s + "' (expected one of " + allowed + ")", field);
}

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::schema_error, where + " must be an object", where);
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    const std::string field = where.empty() ? key : where + "." + key;
    if (!ok) throw Error(ErrorCode::schema_error, "unknown field '" + field + "'", field);
  }
}

template <class T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const std::string field = where.empty() ? key : where + "." + key;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::schema_error, "field '" + field + "' has the wrong type", field);
  }
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  json input;
  if (!c.input.csv.empty()) {
    input["csv"] = c.input.csv;
  } else {
    input = json{{"model", c.input.model}, {"p", c.input.p}, {"alpha", c.input.alpha}, {"n", c.input.n},
                 {"seed", c.input.seed}};
  }
  j["input"] = input;
  if (c.marginals) j["marginals"] = ksobol::to_json(*c.marginals).at("marginals");
  j["mask"] = c.mask;
  json k = ksobol::to_json(c.kernel);
  k.erase("dim");
  j["kernel"] = k;
  json bw{{"mode", detail::name_of(detail::kBandwidthModes, c.bandwidth.mode)}};
  switch (c.bandwidth.mode) {
    case BandwidthSpec::Mode::fixed: bw["h"] = c.bandwidth.h; break;
    case BandwidthSpec::Mode::rule:
      bw["c"] = c.bandwidth.c;
      bw["gamma"] = c.bandwidth.gamma;
      break;
    case BandwidthSpec::Mode::automatic:
      bw["grid_size"] = c.bandwidth.grid_size;
      bw["refine"] = c.bandwidth.refine;
      bw["normalization"] = detail::name_of(detail::kNormalizations, c.bandwidth.normalization);
      bw["mc_draws"] = c.bandwidth.mc_draws;
      break;
    case BandwidthSpec::Mode::default_rule: break;
  }
  j["bandwidth"] = bw;
  json den{{"mode", detail::name_of(detail::kDensityModes, c.density.mode)}};
  switch (c.density.mode) {
    case DensitySpec::Mode::beta_moment:
      den["b"] = c.density.b;
      den["m"] = c.density.m;
      den["aux_seed"] = c.density.aux_seed;
      break;
    case DensitySpec::Mode::mirror_kde:
      den["h"] = c.density.h;
      den["eta"] = c.density.eta;
      den["m"] = c.density.m;
      den["aux_seed"] = c.density.aux_seed;
      break;
    default: break;
  }
  j["density"] = den;
  j["variance_correction"] = detail::name_of(detail::kCorrections, c.correction);
  j["study"] = json{{"n_grid", c.study.n_grid},
                    {"seeds", c.study.seeds},
                    {"seed_start", c.study.seed_start},
                    {"estimators", c.study.estimators},
                    {"variance_scale", c.study.variance_scale}};
  j["ci_level"] = c.ci_level;
  j["threads"] = c.threads;
  j["output"] = c.output;
  j["format"] = c.format;
  return j;
}

inline RunConfig config_from_json(const json& j) {
  using detail::read_field;
  RunConfig c;
  detail::check_keys(j, "", {"command", "input", "marginals", "mask", "kernel", "bandwidth", "density",
                             "variance_correction", "study", "ci_level", "threads", "output", "format"});
  read_field(j, "command", c.command, "");
  if (j.contains("input")) {
    const auto& in = j.at("input");
    detail::check_keys(in, "input", {"csv", "model", "p", "alpha", "n", "seed"});
    if (in.contains("csv") && in.contains("model")) {
      throw Error(ErrorCode::schema_error, "input: give either csv or model, not both", "input");
    }
    read_field(in, "csv", c.input.csv, "input");
    read_field(in, "model", c.input.model, "input");
    read_field(in, "p", c.input.p, "input");
    read_field(in, "alpha", c.input.alpha, "input");
    read_field(in, "n", c.input.n, "input");
    read_field(in, "seed", c.input.seed, "input");
  }
  if (j.contains("marginals")) c.marginals = input_model_from_json(json{{"marginals", j.at("marginals")}});
  read_field(j, "mask", c.mask, "");
  if (j.contains("kernel")) {
    detail::check_keys(j.at("kernel"), "kernel", {"order", "base"});
    c.kernel = kernel_spec_from_json(j.at("kernel"));
  }
  if (j.contains("bandwidth")) {
    const auto& b = j.at("bandwidth");
    detail::check_keys(b, "bandwidth", {"mode", "h", "c", "gamma", "grid_size", "refine", "normalization", "mc_draws"});
    std::string mode = "default";
    read_field(b, "mode", mode, "bandwidth");
    c.bandwidth.mode = detail::parse_enum(detail::kBandwidthModes, mode, "bandwidth.mode");
    const bool fixed = c.bandwidth.mode == BandwidthSpec::Mode::fixed;
    const bool rule = c.bandwidth.mode == BandwidthSpec::Mode::rule;
    const bool automatic = c.bandwidth.mode == BandwidthSpec::Mode::automatic;
    auto only = [&](const char* key, bool allowed) {
      if (b.contains(key) && !allowed) {
        throw Error(ErrorCode::schema_error,
                    std::string("bandwidth.") + key + " does not apply to bandwidth mode '" + mode + "'",
                    std::string("bandwidth.") + key);
      }
    };
    only("h", fixed);
    only("c", rule);
    only("gamma", rule);
    for (const char* key : {"grid_size", "refine", "normalization", "mc_draws"}) only(key, automatic);
    if (fixed && !b.contains("h")) throw Error(ErrorCode::schema_error, "bandwidth mode 'fixed' needs h", "bandwidth.h");
    read_field(b, "h", c.bandwidth.h, "bandwidth");
    read_field(b, "c", c.bandwidth.c, "bandwidth");
    read_field(b, "gamma", c.bandwidth.gamma, "bandwidth");
    read_field(b, "grid_size", c.bandwidth.grid_size, "bandwidth");
    read_field(b, "refine", c.bandwidth.refine, "bandwidth");
    read_field(b, "mc_draws", c.bandwidth.mc_draws, "bandwidth");
    if (b.contains("normalization")) {
      std::string norm;
      read_field(b, "normalization", norm, "bandwidth");
      c.bandwidth.normalization = detail::parse_enum(detail::kNormalizations, norm, "bandwidth.normalization");
    }
  }
  if (j.contains("density")) {
    const auto& d = j.at("density");
    detail::check_keys(d, "density", {"mode", "b", "m", "aux_seed", "h", "eta"});
    std::string mode = "exact";
    read_field(d, "mode", mode, "density");
    c.density.mode = detail::parse_enum(detail::kDensityModes, mode, "density.mode");
    read_field(d, "b", c.density.b, "density");
    read_field(d, "m", c.density.m, "density");
    read_field(d, "aux_seed", c.density.aux_seed, "density");
    read_field(d, "h", c.density.h, "density");
    read_field(d, "eta", c.density.eta, "density");
  }
  if (j.contains("variance_correction")) {
    std::string corr;
    read_field(j, "variance_correction", corr, "");
    c.correction = detail::parse_enum(detail::kCorrections, corr, "variance_correction");
  }
  if (j.contains("study")) {
    const auto& s = j.at("study");
    detail::check_keys(s, "study", {"n_grid", "seeds", "seed_start", "estimators", "variance_scale"});
    read_field(s, "n_grid", c.study.n_grid, "study");
    read_field(s, "seeds", c.study.seeds, "study");
    read_field(s, "seed_start", c.study.seed_start, "study");
    read_field(s, "estimators", c.study.estimators, "study");
    read_field(s, "variance_scale", c.study.variance_scale, "study");
  }
  read_field(j, "ci_level", c.ci_level, "");
  read_field(j, "threads", c.threads, "");
  read_field(j, "output", c.output, "");
  read_field(j, "format", c.format, "");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open config '" + path + "'", "config");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, "config '" + path + "': " + e.what(), "config");
  }
  return config_from_json(j);
}

/// Field-level checks that do not need the data.
inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw Error(ErrorCode::schema_error, field + ": " + msg, field);
  };
  if (!commands().contains(c.command)) fail("command", "unknown command '" + c.command + "'");
  if (c.mask.empty()) fail("mask", "must be nonempty");
  for (std::size_t i = 0; i < c.mask.size(); ++i) {
    if (c.mask[i] == 0) fail("mask", "indices are 1-based");
    if (i > 0 && c.mask[i] <= c.mask[i - 1]) fail("mask", "indices must be strictly ascending");
  }
  if (c.input.csv.empty()) {
    if (c.input.n < 2) fail("input.n", "must be >= 2");
    if (c.input.p < 1) fail("input.p", "must be >= 1");
  }
  if (c.kernel.order < 0 || c.kernel.order > kMaxKernelOrder) fail("kernel.order", "out of range");
  switch (c.bandwidth.mode) {
    case BandwidthSpec::Mode::fixed:
      if (!(c.bandwidth.h > 0.0)) fail("bandwidth.h", "must be positive");
      break;
    case BandwidthSpec::Mode::rule:
      if (!(c.bandwidth.c > 0.0)) fail("bandwidth.c", "must be positive");
      if (!(c.bandwidth.gamma > 0.0)) fail("bandwidth.gamma", "must be positive");
      break;
    case BandwidthSpec::Mode::automatic:
      if (c.bandwidth.grid_size < 1) fail("bandwidth.grid_size", "must be >= 1");
      break;
    case BandwidthSpec::Mode::default_rule: break;
  }
  if (c.command == "bandwidth" && c.bandwidth.mode != BandwidthSpec::Mode::automatic &&
      c.bandwidth.mode != BandwidthSpec::Mode::default_rule) {
    fail("bandwidth.mode", "the bandwidth command selects h itself; use 'auto'");
  }
  if (!(c.ci_level > 0.0 && c.ci_level < 1.0)) fail("ci_level", "must lie in (0, 1)");
  if (c.threads < 1) fail("threads", "must be >= 1");
  if (c.format != "json" && c.format != "csv") fail("format", "must be json or csv");
  if (c.density.mode == DensitySpec::Mode::beta_moment && !(c.density.b > 1.0 && c.density.b < 1.5))
    fail("density.b", "must lie in (1, 1.5)");
  if (c.density.mode == DensitySpec::Mode::mirror_kde && !(c.density.eta > 0.0))
    fail("density.eta", "mirror_kde needs a positive lower bound eta on the input density");
  if ((c.density.mode == DensitySpec::Mode::beta_moment || c.density.mode == DensitySpec::Mode::mirror_kde) &&
      c.density.m < 1)
    fail("density.m", "must be >= 1");
  const bool study = c.command == "convergence" || c.command == "coverage" || c.command == "compare";
  if (study) {
    if (!c.input.csv.empty()) fail("input", "studies draw from a builtin model, not a CSV file");
    if (c.bandwidth.mode == BandwidthSpec::Mode::automatic) fail("bandwidth.mode", "'auto' is not available in studies");
    if (c.density.mode != DensitySpec::Mode::exact && c.density.mode != DensitySpec::Mode::uniform_max)
      fail("density.mode", "studies support exact and uniform_max only");
    if (c.study.n_grid.empty()) fail("study.n_grid", "must be nonempty");
    if (c.study.seeds < 1) fail("study.seeds", "must be >= 1");
    if (c.study.estimators.empty()) fail("study.estimators", "must be nonempty");
    for (const auto& e : c.study.estimators) {
      try {
        estimator_from_string(e);
      } catch (const Error&) {
        fail("study.estimators", "unknown estimator '" + e + "'");
      }
    }
    if (!(c.study.variance_scale > 0.0)) fail("study.variance_scale", "must be positive");
  }
}

namespace detail {

struct Problem {
  FullSample sample;
  InputModel inputs;
  std::optional<AnalyticModel> model;
  SubsetSpec spec;
};

inline Problem load_problem(const RunConfig& c) {
  Problem pr;
  if (!c.input.csv.empty()) {
    pr.sample = load_sample_csv(c.input.csv);
    pr.inputs = c.marginals ? *c.marginals : InputModel(std::vector<Marginal>(pr.sample.p(), Uniform{0.0, 1.0}));
    if (pr.inputs.dim() != pr.sample.p()) {
      throw Error(ErrorCode::dimension_mismatch,
                  "marginals: " + std::to_string(pr.inputs.dim()) + " marginals for " + std::to_string(pr.sample.p()) +
                      " input columns",
                  "marginals");
    }
  } else {
    pr.model = model_by_name(c.input.model, c.input.p, c.input.alpha);
    pr.inputs = pr.model->inputs;
    pr.sample = pr.model->draw(c.input.n, c.input.seed);
  }
  std::vector<std::size_t> zero_based;
  for (auto i : c.mask) zero_based.push_back(i - 1);
  pr.spec = SubsetSpec(zero_based);
  try {
    pr.spec.validate(pr.sample.p());
  } catch (const Error& e) {
    throw Error(e.code(), std::string("mask: ") + e.what(), "mask");
  }
  return pr;
}

inline KernelD make_kernel(const RunConfig& c, std::size_t d) {
  KernelSpec k = c.kernel;
  k.dim = d;
  return build_kernel(k);
}

inline json density_json(const DensityEstimate& est) {
  json j;
  switch (est.kind) {
    case DensityKind::uniform_max:
      j = json{{"kind", "uniform_max"}, {"theta_hat", est.theta_hat}};
      break;
    case DensityKind::beta_moment:
      j = json{{"kind", "beta_moment"}, {"a_hat", est.a_hat}, {"b", est.b}, {"fallback", est.fallback}};
      break;
    case DensityKind::mirror_kde:
      j = json{{"kind", "mirror_kde"}, {"h", est.h_kde}, {"eta", est.eta}};
      break;
  }
  return j;
}

/// Density oracle for the estimator; plug-in details go to `info`.
inline InputDensity resolve_density(const RunConfig& c, const Problem& pr, json& info) {
  const auto exact = InputDensity::exact(pr.inputs, pr.spec);
  const std::size_t d = pr.spec.dim();
  switch (c.density.mode) {
    case DensitySpec::Mode::exact: return exact;
    case DensitySpec::Mode::uniform_max: {
      if (d != 1) throw Error(ErrorCode::unsupported_dimension, "uniform_max density needs a one-input mask", "density.mode");
      const auto col = pr.sample.V.col(static_cast<Eigen::Index>(pr.spec.mask[0]));
      const std::vector<double> aux(col.data(), col.data() + col.size());
      const auto est = uniform_max_estimator(aux);
      info = density_json(est);
      return est.as_input_density();
    }
    case DensitySpec::Mode::beta_moment: {
      if (d != 1) throw Error(ErrorCode::unsupported_dimension, "beta_moment density needs a one-input mask", "density.mode");
      const auto& marg = pr.inputs.marginal(pr.spec.mask[0]);
      std::vector<double> aux(c.density.m);
      Rng rng(c.density.aux_seed);
      for (auto& v : aux) v = marg.quantile(rng.uniform_open());
      const auto est = beta_moment_estimator(aux, c.density.b);
      info = density_json(est);
      return est.as_input_density();
    }
    case DensitySpec::Mode::mirror_kde: {
      std::vector<Marginal> ms;
      for (auto i : pr.spec.mask) ms.push_back(pr.inputs.marginal(i));
      const InputModel sub(ms);
      const auto aux = sample(sub, c.density.m, c.density.aux_seed);
      const auto kernel = make_kernel(c, d);
      const double h = c.density.h > 0.0 ? c.density.h
                                         : default_kde_bandwidth(c.density.m, kernel.order(), d, exact.domain);
      const auto est = mirror_kde(aux, kernel, h, c.density.eta, exact.domain);
      info = density_json(est);
      return est.as_input_density();
    }
  }
  return exact;
}

inline PilotConfig pilot_config(const RunConfig& c, const Problem& pr, const Domain& domain) {
  PilotConfig pc;
  pc.grid = default_bandwidth_grid(pr.sample.n(), pr.spec.dim(), domain, c.bandwidth.grid_size);
  pc.refine = c.bandwidth.refine;
  pc.normalization = c.bandwidth.normalization;
  pc.threads = c.threads;
  return pc;
}

inline json selection_json(const BandwidthSelection& sel) {
  auto points = [](const std::vector<BandwidthPoint>& pts) {
    json a = json::array();
    for (const auto& p : pts) a.push_back(json{{"h", p.h}, {"t_virtual", p.t_virtual}, {"objective", p.objective}});
    return a;
  };
  return json{{"h_star", sel.h_star},
              {"h0", sel.h0},
              {"target", sel.target},
              {"target_full", sel.target_full},
              {"target_as_printed", sel.target_as_printed},
              {"curve", points(sel.curve)},
              {"refined", points(sel.refined)}};
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline json envelope(const RunConfig& c) {
  return json{{"schema_version", kSchemaVersion}, {"command", c.command}, {"config", to_json(c)}};
}

inline std::string run_estimate(const RunConfig& c) {
  const auto pr = load_problem(c);
  json density_info;
  const auto density = resolve_density(c, pr, density_info);
  const auto kernel = make_kernel(c, pr.spec.dim());
  json bw_info;
  double h = 0.0;
  switch (c.bandwidth.mode) {
    case BandwidthSpec::Mode::fixed: h = c.bandwidth.h; break;
    case BandwidthSpec::Mode::rule: h = c.bandwidth.c * std::pow(static_cast<double>(pr.sample.n()), -c.bandwidth.gamma); break;
    case BandwidthSpec::Mode::default_rule:
      h = default_bandwidth(pr.sample.n(), kernel.order(), pr.spec.dim(), density.domain);
      break;
    case BandwidthSpec::Mode::automatic: {
      const auto sel = select_bandwidth(pr.sample, pr.spec, kernel,
                                        pilot_config(c, pr, InputDensity::exact(pr.inputs, pr.spec).domain), pr.inputs);
      h = sel.h_star;
      bw_info = selection_json(sel);
      break;
    }
  }
  EstimateOptions opts;
  opts.ci_level = c.ci_level;
  opts.threads = c.threads;
  opts.correction = c.correction;
  const auto r = estimate_sobol(pr.sample, pr.spec, kernel, h, density, opts);

  if (c.format == "csv") {
    std::ostringstream os;
    os << "t_hat,sobol,var_t,var_sobol,ci_lo,ci_hi,ci_level,n,h,mask,seed,mean_y,var_y\n";
    os << fmt(r.t_hat) << ',' << fmt(r.sobol) << ',' << fmt(r.var_t) << ',' << fmt(r.var_sobol) << ','
       << fmt(r.ci_lo) << ',' << fmt(r.ci_hi) << ',' << fmt(r.ci_level) << ',' << r.n_used << ',' << fmt(r.h_used)
       << ",\"" << mask_label(pr.spec) << "\"," << (c.input.csv.empty() ? std::to_string(c.input.seed) : "")
       << ',' << fmt(r.mean_y) << ',' << fmt(r.var_y) << '\n';
    return os.str();
  }
  auto j = envelope(c);
  j["result"] = ksobol::to_json(r);
  j["result"]["mask"] = c.mask;
  j["result"]["seed"] = c.input.csv.empty() ? json(c.input.seed) : json(nullptr);
  if (!bw_info.is_null()) j["bandwidth_selection"] = bw_info;
  if (!density_info.is_null()) j["density_estimate"] = density_info;
  if (pr.model) j["truth"] = json{{"t", pr.model->true_t(pr.spec)}, {"sobol", pr.model->true_sobol(pr.spec)}};
  return j.dump(2) + "\n";
}

inline std::string run_bandwidth(const RunConfig& c) {
  const auto pr = load_problem(c);
  const auto kernel = make_kernel(c, pr.spec.dim());
  const auto domain = InputDensity::exact(pr.inputs, pr.spec).domain;
  const auto pc = pilot_config(c, pr, domain);
  const auto sel = select_bandwidth(pr.sample, pr.spec, kernel, pc, pr.inputs);
  if (c.format == "csv") {
    std::ostringstream os;
    os << "h,t_virtual,objective,refined\n";
    for (const auto& p : sel.curve) os << fmt(p.h) << ',' << fmt(p.t_virtual) << ',' << fmt(p.objective) << ",0\n";
    for (const auto& p : sel.refined) os << fmt(p.h) << ',' << fmt(p.t_virtual) << ',' << fmt(p.objective) << ",1\n";
    return os.str();
  }
  auto j = envelope(c);
  j["result"] = selection_json(sel);
  if (c.bandwidth.mc_draws > 0) {
    const auto betas = compute_beta_tables(pr.sample, pr.spec, pr.inputs, sel.h0, c.threads);
    const auto mc = target_functional_monte_carlo(pr.sample, pr.spec, pr.inputs, sel.h0, betas, c.bandwidth.mc_draws,
                                                  stream_seed(c.input.seed, 0x6d63));
    j["result"]["target_monte_carlo"] = json{{"value", mc.value}, {"standard_error", mc.standard_error}};
  }
  return j.dump(2) + "\n";
}

inline ExperimentPlan study_plan(const RunConfig& c) {
  ExperimentPlan plan;
  plan.model = model_by_name(c.input.model, c.input.p, c.input.alpha);
  std::vector<std::size_t> zero_based;
  for (auto i : c.mask) zero_based.push_back(i - 1);
  plan.masks = {SubsetSpec(zero_based)};
  try {
    plan.masks.front().validate(plan.model.p());
  } catch (const Error& e) {
    throw Error(e.code(), std::string("mask: ") + e.what(), "mask");
  }
  plan.n_grid = c.study.n_grid;
  switch (c.bandwidth.mode) {
    case BandwidthSpec::Mode::fixed:
      plan.h_rule.mode = BandwidthRule::Mode::fixed;
      plan.h_rule.h = c.bandwidth.h;
      break;
    case BandwidthSpec::Mode::rule:
      plan.h_rule.mode = BandwidthRule::Mode::power;
      plan.h_rule.c = c.bandwidth.c;
      plan.h_rule.gamma = c.bandwidth.gamma;
      break;
    default: plan.h_rule.mode = BandwidthRule::Mode::default_rule; break;
  }
  plan.kernel_order = c.kernel.order;
  for (std::size_t s = 0; s < c.study.seeds; ++s) plan.seeds.push_back(c.study.seed_start + s);
  plan.estimators.clear();
  for (const auto& e : c.study.estimators) plan.estimators.push_back(estimator_from_string(e));
  plan.ci_level = c.ci_level;
  plan.variance_scale = c.study.variance_scale;
  plan.density = c.density.mode == DensitySpec::Mode::uniform_max ? DensityMode::uniform_max : DensityMode::exact;
  plan.correction = c.correction;
  plan.threads = c.threads;
  return plan;
}

inline std::string table_csv(const StudyTable& t) {
  std::ostringstream os;
  os << "model,mask,estimator,n,h,seed_count,mean,rmse,var_scaled_by_n,coverage,theoretical_variance,efficient_bound,budget\n";
  for (const auto& r : t.rows) {
    os << r.model << ",\"" << r.mask << "\"," << to_string(r.estimator) << ',' << r.n << ',' << fmt(r.h) << ','
       << r.seed_count << ',' << fmt(r.mean) << ',' << fmt(r.rmse) << ',' << fmt(r.var_scaled_by_n) << ','
       << fmt(r.coverage) << ',' << fmt(r.theoretical_variance) << ',' << fmt(r.efficient_bound) << ',' << r.budget
       << '\n';
  }
  return os.str();
}

/// NaN has no JSON spelling; absent quantities become null.
inline json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::string run_study(const RunConfig& c) {
  const auto plan = study_plan(c);
  StudyTable table;
  if (c.command == "convergence") {
    table = convergence_study(plan);
  } else if (c.command == "coverage") {
    table = coverage_study(plan, c.ci_level);
  } else {
    table = compare_study(plan);
  }
  if (c.format == "csv") return table_csv(table);
  auto j = envelope(c);
  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back(json{{"model", r.model},
                        {"mask", r.mask},
                        {"estimator", to_string(r.estimator)},
                        {"n", r.n},
                        {"h", num_or_null(r.h)},
                        {"seed_count", r.seed_count},
                        {"mean", r.mean},
                        {"rmse", r.rmse},
                        {"var_scaled_by_n", r.var_scaled_by_n},
                        {"coverage", num_or_null(r.coverage)},
                        {"theoretical_variance", num_or_null(r.theoretical_variance)},
                        {"efficient_bound", num_or_null(r.efficient_bound)},
                        {"budget", r.budget}});
  }
  json slopes = json::array();
  for (const auto& s : table.slopes)
    slopes.push_back(json{{"mask", s.mask}, {"estimator", to_string(s.estimator)}, {"slope", num_or_null(s.slope)}});
  j["truth"] = json{{"sobol", plan.model.true_sobol(plan.masks.front())}};
  j["rows"] = rows;
  j["slopes"] = slopes;
  return j.dump(2) + "\n";
}

inline std::filesystem::path output_path(const RunConfig& c) {
  if (!c.output.empty()) return c.output;
  if (const char* dir = std::getenv("KSOBOL_OUTPUT_DIR"); dir != nullptr && *dir != '\0') {
    return std::filesystem::path(dir) / (c.command + "." + c.format);
  }
  return {};
}

}  // namespace detail

/// Produces the artifact text for a validated config.
inline std::string render(const RunConfig& c) {
  validate(c);
  if (c.command == "estimate") return detail::run_estimate(c);
  if (c.command == "bandwidth") return detail::run_bandwidth(c);
  return detail::run_study(c);
}

/// Writes the artifact to the configured file, or to `out` when none is set.
/// Errors are reported on `err` as {"error": {code, message, field}}.
inline int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    const auto text = render(c);
    const auto path = detail::output_path(c);
    if (path.empty()) {
      out << text;
      out.flush();
    } else {
      if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
      }
      std::ofstream f(path, std::ios::binary);
      if (!f) throw Error(ErrorCode::io_error, "cannot write '" + path.string() + "'", "output");
      f << text;
      if (!f) throw Error(ErrorCode::io_error, "write failed for '" + path.string() + "'", "output");
    }
    return 0;
  } catch (const Error& e) {
    err << error_json(e).dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << json{{"error", json{{"code", "internal"}, {"message", e.what()}, {"field", ""}}}}.dump() << '\n';
    return 1;
  }
}

/// Parses argv into a RunConfig. A --config file is read first; explicit
/// flags then override its fields.
inline RunConfig parse_args(int argc, const char* const* argv) {
  CLI::App app{"Kernel-based Sobol index estimation"};
  app.require_subcommand(1, 1);
  app.set_help_flag("--help", "Print this help message and exit");

  std::string config_path;
  std::string input_csv;
  std::string model;
  std::optional<std::size_t> p;
  std::optional<double> alpha;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::string marginals;
  std::vector<std::size_t> mask;
  std::optional<int> order;
  std::string bw_mode;
  std::optional<double> h;
  std::optional<double> c_rule;
  std::optional<double> gamma;
  std::optional<std::size_t> grid_size;
  bool refine = false;
  std::string normalization;
  std::optional<std::size_t> mc_draws;
  std::string density_mode;
  std::optional<double> beta_b;
  std::optional<std::size_t> aux_m;
  std::optional<std::uint64_t> aux_seed;
  std::optional<double> kde_h;
  std::optional<double> eta;
  std::string correction;
  std::vector<std::size_t> n_grid;
  std::optional<std::size_t> seeds;
  std::optional<std::uint64_t> seed_start;
  std::vector<std::string> estimators;
  std::optional<double> variance_scale;
  std::optional<double> ci_level;
  std::optional<std::size_t> threads;
  std::string output;
  std::string format;

  for (const auto& name : commands()) {
    auto* sub = app.add_subcommand(name, "Run the " + name + " command");
    sub->add_option("--config", config_path, "JSON config file; flags override its fields");
    sub->add_option("--csv", input_csv, "input CSV with header v1,...,vp,y");
    sub->add_option("--model", model, "builtin model: linear, weighted_linear, ishigami, product, exponential");
    sub->add_option("--p", p, "input dimension for linear models");
    sub->add_option("--alpha", alpha, "weighted linear exponent");
    sub->add_option("--n", n, "sample size drawn from the model");
    sub->add_option("--seed", seed, "sample seed");
    sub->add_option("--marginals", marginals, "JSON array of marginals for CSV input");
    sub->add_option("--mask", mask, "1-based input indices")->delimiter(',');
    sub->add_option("--order", order, "kernel order");
    sub->add_option("--bandwidth", bw_mode, "fixed | auto | rule | default");
    sub->add_option("--h", h, "fixed bandwidth");
    sub->add_option("--c", c_rule, "rule constant in h = c n^-gamma");
    sub->add_option("--gamma", gamma, "rule exponent in h = c n^-gamma");
    sub->add_option("--grid-size", grid_size, "automatic selection grid size");
    sub->add_flag("--refine", refine, "golden-section refinement after the grid");
    sub->add_option("--normalization", normalization, "full | as_printed");
    sub->add_option("--mc-draws", mc_draws, "Monte Carlo draws for the target cross-check");
    sub->add_option("--density", density_mode, "exact | uniform_max | beta_moment | mirror_kde");
    sub->add_option("--beta-b", beta_b, "beta_moment shape b");
    sub->add_option("--aux-m", aux_m, "auxiliary sample size");
    sub->add_option("--aux-seed", aux_seed, "auxiliary sample seed");
    sub->add_option("--kde-h", kde_h, "mirror_kde bandwidth");
    sub->add_option("--eta", eta, "mirror_kde floor parameter");
    sub->add_option("--variance-correction", correction, "plain | finite_sample | asymptotic");
    sub->add_option("--n-grid", n_grid, "study sample sizes")->delimiter(',');
    sub->add_option("--seeds", seeds, "study replicate count");
    sub->add_option("--seed-start", seed_start, "first study seed");
    sub->add_option("--estimators", estimators, "kernel, pf, nn, rank")->delimiter(',');
    sub->add_option("--variance-scale", variance_scale, "multiplier on the plug-in variance in studies");
    sub->add_option("--ci-level", ci_level, "confidence level");
    sub->add_option("--threads", threads, "worker threads");
    sub->add_option("--output", output, "output file");
    sub->add_option("--format", format, "json | csv");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    throw;
  } catch (const CLI::ParseError& e) {
    throw Error(ErrorCode::parse_error, e.what(), "argv");
  }

  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
  cfg.command = app.get_subcommands().front()->get_name();

  if (!input_csv.empty()) {
    cfg.input = InputSpec{};
    cfg.input.csv = input_csv;
  }
  if (!model.empty()) {
    cfg.input.csv.clear();
    cfg.input.model = model;
  }
  if (p) cfg.input.p = *p;
  if (alpha) cfg.input.alpha = *alpha;
  if (n) cfg.input.n = *n;
  if (seed) cfg.input.seed = *seed;
  if (!marginals.empty()) {
    try {
      cfg.marginals = input_model_from_json(json{{"marginals", json::parse(marginals)}});
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::parse_error, std::string("--marginals: ") + e.what(), "marginals");
    }
  }
  if (!mask.empty()) cfg.mask = mask;
  if (order) cfg.kernel.order = *order;
  if (!bw_mode.empty()) cfg.bandwidth.mode = detail::parse_enum(detail::kBandwidthModes, bw_mode, "bandwidth.mode");
  if (h) {
    if (bw_mode.empty()) cfg.bandwidth.mode = BandwidthSpec::Mode::fixed;
    cfg.bandwidth.h = *h;
  }
  if (c_rule || gamma) {
    if (bw_mode.empty() && !h) cfg.bandwidth.mode = BandwidthSpec::Mode::rule;
    if (c_rule) cfg.bandwidth.c = *c_rule;
    if (gamma) cfg.bandwidth.gamma = *gamma;
  }
  if (h && (c_rule || gamma)) {
    throw Error(ErrorCode::schema_error, "give either --h or --c/--gamma, not both", "bandwidth.mode");
  }
  if (grid_size) cfg.bandwidth.grid_size = *grid_size;
  if (refine) cfg.bandwidth.refine = true;
  if (!normalization.empty())
    cfg.bandwidth.normalization = detail::parse_enum(detail::kNormalizations, normalization, "bandwidth.normalization");
  if (mc_draws) cfg.bandwidth.mc_draws = *mc_draws;
  if (!density_mode.empty()) cfg.density.mode = detail::parse_enum(detail::kDensityModes, density_mode, "density.mode");
  if (beta_b) cfg.density.b = *beta_b;
  if (aux_m) cfg.density.m = *aux_m;
  if (aux_seed) cfg.density.aux_seed = *aux_seed;
  if (kde_h) cfg.density.h = *kde_h;
  if (eta) cfg.density.eta = *eta;
  if (!correction.empty()) cfg.correction = detail::parse_enum(detail::kCorrections, correction, "variance_correction");
  if (!n_grid.empty()) cfg.study.n_grid = n_grid;
  if (seeds) cfg.study.seeds = *seeds;
  if (seed_start) cfg.study.seed_start = *seed_start;
  if (!estimators.empty()) cfg.study.estimators = estimators;
  if (variance_scale) cfg.study.variance_scale = *variance_scale;
  if (ci_level) cfg.ci_level = *ci_level;
  if (threads) cfg.threads = *threads;
  if (!output.empty()) cfg.output = output;
  if (!format.empty()) cfg.format = format;
  return cfg;
}

}  // namespace ksobol::cli
