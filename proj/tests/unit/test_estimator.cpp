#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ksobol/estimator.hpp"
#include "ksobol/models.hpp"
#include "ksobol/testbed.hpp"
#include "support.hpp"

using namespace ksobol;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

KernelD kernel_of(int order, std::size_t d) { return tensorize(build_kernel_1d(BaseDensity::uniform_half(), order), d); }

// Order-1 kernel 8 - 24u on [0, 1/2], written out independently.
double k1_explicit(double u) { return (u >= 0.0 && u <= 0.5) ? 8.0 - 24.0 * u : 0.0; }

FullSample random_sample(std::size_t n, std::size_t p, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FullSample s;
  s.V.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  s.Y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < s.V.rows(); ++j) {
    double y = 0.0;
    for (Eigen::Index i = 0; i < s.V.cols(); ++i) {
      s.V(j, i) = u(gen);
      y += std::sin(3.0 * s.V(j, i)) * static_cast<double>(i + 1);
    }
    s.Y(j) = y + 0.3 * u(gen);
  }
  return s;
}

InputModel unit_inputs(std::size_t p) { return InputModel(std::vector<Marginal>(p, Uniform{0.0, 1.0})); }

}  // namespace

TEST_CASE("estimate_t small cases", "[estimator]") {
  const auto inputs = unit_inputs(1);
  const SubsetSpec spec({0});
  const auto density = InputDensity::exact(inputs, spec);

  SECTION("n = 2 by hand") {
    FullSample s;
    s.V.resize(2, 1);
    s.V << 0.2, 0.3;
    s.Y.resize(2);
    s.Y << 1.5, -0.7;
    const double h = 0.4;
    // X_1 = 0.2 lies in the lower half, X_2 = 0.3 too: both signs +1.
    const double a = k1_explicit((0.3 - 0.2) / h) / h;
    const double b = k1_explicit((0.2 - 0.3) / h) / h;
    const double expected = 1.5 * -0.7 / 2.0 * (a / 1.0 + b / 1.0);
    REQUIRE_THAT(estimate_t(s, spec, kernel_of(1, 1), h, density), WithinRel(expected, 1e-14));
  }

  SECTION("n = 2 with a reflected point") {
    FullSample s;
    s.V.resize(2, 1);
    s.V << 0.9, 0.8;
    s.Y.resize(2);
    s.Y << 2.0, 3.0;
    const double h = 0.5;
    // Both points are in the upper half, so the differences are negated.
    const double a = k1_explicit(-(0.8 - 0.9) / h) / h;
    const double b = k1_explicit(-(0.9 - 0.8) / h) / h;
    REQUIRE_THAT(estimate_t(s, spec, kernel_of(1, 1), h, density), WithinRel(3.0 * (a + b), 1e-14));
  }

  SECTION("zero outputs") {
    auto s = random_sample(30, 1, 1);
    s.Y.setZero();
    REQUIRE(estimate_t(s, spec, kernel_of(2, 1), 0.3, density) == 0.0);
  }
}

TEST_CASE("estimate_t matches the brute-force oracle", "[estimator]") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t p = 1 + static_cast<std::size_t>(trial % 3);
    const std::size_t n = 2 + static_cast<std::size_t>(gen() % 63);
    auto s = random_sample(n, p, static_cast<std::uint64_t>(trial));
    std::vector<std::size_t> mask;
    for (std::size_t i = 0; i < p; ++i)
      if (gen() % 2 == 0 || (i + 1 == p && mask.empty())) mask.push_back(i);
    const SubsetSpec spec(mask);
    const auto inputs = unit_inputs(p);
    const auto density = InputDensity::exact(inputs, spec);
    const int order = static_cast<int>(gen() % 5);
    const auto kernel = kernel_of(order, spec.dim());
    const double h = 0.05 + 0.9 * static_cast<double>(gen() % 1000) / 1000.0;
    const double fast = estimate_t(s, spec, kernel, h, density);
    const double slow = brute_force_t(s, spec, kernel, h, density);
    INFO("trial " << trial << " n " << n << " d " << spec.dim() << " k " << order << " h " << h);
    REQUIRE(testing::rel_diff(fast, slow) <= 1e-12);
  }
}

TEST_CASE("one-dimensional fast path agrees with direct summation", "[estimator]") {
  const auto inputs = unit_inputs(1);
  const SubsetSpec spec({0});
  const auto density = InputDensity::exact(inputs, spec);
  for (int order : {1, 2, 4}) {
    for (double h : {0.02, 0.2}) {
      auto s = random_sample(6000, 1, 77);
      // Duplicate some inputs so ties cross block edges.
      for (Eigen::Index j = 0; j < 300; ++j) s.V(j + 300, 0) = s.V(j, 0);
      const auto kernel = kernel_of(order, 1);
      const auto pts = detail::prepare_points(s, spec, kernel, h, density);
      const auto y = detail::to_vector(s.Y);
      const auto a = detail::kernel_row_sums(pts, y, kernel, h, density.domain, 1, true);
      const auto b = detail::kernel_row_sums(pts, y, kernel, h, density.domain, 1, false);
      double worst = 0.0;
      double scale = 0.0;
      for (std::size_t j = 0; j < a.r.size(); ++j) scale = std::max(scale, std::abs(b.r[j]));
      for (std::size_t j = 0; j < a.r.size(); ++j) worst = std::max(worst, std::abs(a.r[j] - b.r[j]) / scale);
      INFO("order " << order << " h " << h);
      REQUIRE(worst <= 1e-9);
      for (std::size_t j = 0; j < a.r2.size(); ++j) REQUIRE(testing::rel_diff(a.r2[j], b.r2[j]) <= 1e-7);
    }
  }
}

TEST_CASE("row sums do not depend on the thread count", "[estimator]") {
  const auto inputs = unit_inputs(2);
  for (const auto& mask : {std::vector<std::size_t>{0}, std::vector<std::size_t>{0, 1}}) {
    const SubsetSpec spec(mask);
    const auto density = InputDensity::exact(inputs, spec);
    const auto s = random_sample(5000, 2, 5);
    const auto kernel = kernel_of(2, spec.dim());
    const double t1 = estimate_t(s, spec, kernel, 0.1, density, 1);
    const double t4 = estimate_t(s, spec, kernel, 0.1, density, 4);
    REQUIRE(t1 == t4);
  }
}

TEST_CASE("estimate_t invariants", "[estimator]") {
  const auto inputs = unit_inputs(2);
  const SubsetSpec spec({1});
  const auto density = InputDensity::exact(inputs, spec);
  const auto kernel = kernel_of(2, 1);
  const double h = 0.15;
  const auto s = random_sample(400, 2, 9);
  const double t = estimate_t(s, spec, kernel, h, density);

  SECTION("row permutation") {
    std::vector<Eigen::Index> perm(400);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 gen(1);
    for (int rep = 0; rep < 5; ++rep) {
      std::shuffle(perm.begin(), perm.end(), gen);
      FullSample sh;
      sh.V.resize(400, 2);
      sh.Y.resize(400);
      for (Eigen::Index j = 0; j < 400; ++j) {
        sh.V.row(j) = s.V.row(perm[static_cast<std::size_t>(j)]);
        sh.Y(j) = s.Y(perm[static_cast<std::size_t>(j)]);
      }
      REQUIRE(testing::rel_diff(estimate_t(sh, spec, kernel, h, density), t) <= 1e-13);
    }
  }

  SECTION("scale") {
    FullSample sc = s;
    sc.Y *= -3.5;
    REQUIRE(testing::rel_diff(estimate_t(sc, spec, kernel, h, density), 12.25 * t) <= 1e-13);
  }

  SECTION("shift expands bilinearly") {
    auto with = [&](double c) {
      FullSample x = s;
      x.Y.array() += c;
      return estimate_t(x, spec, kernel, h, density);
    };
    FullSample ones = s;
    ones.Y.setOnes();
    const double t11 = estimate_t(ones, spec, kernel, h, density);
    // Polarization recovers the mixed term B(Y, 1).
    const double b_y1 = (with(1.0) - with(-1.0)) / 4.0;
    for (double c : {0.5, 2.0, -7.0}) {
      const double expected = t + 2.0 * c * b_y1 + c * c * t11;
      REQUIRE(testing::rel_diff(with(c), expected) <= 1e-12);
    }
  }
}

TEST_CASE("Sobol plug-in", "[estimator]") {
  const auto model = linear_model(3);
  const SubsetSpec spec({0});
  const auto density = InputDensity::exact(model.inputs, spec);
  const auto kernel = kernel_of(2, 1);

  SECTION("ratio definition and CI shape") {
    const auto s = model.draw(3000, 4);
    const double h = std::pow(3000.0, -0.4);
    const auto r = estimate_sobol(s, spec, kernel, h, density);
    const double ybar = s.Y.mean();
    const double var = (s.Y.array() - ybar).square().mean();
    REQUIRE_THAT(r.sobol, WithinRel((r.t_hat - ybar * ybar) / var, 1e-12));
    REQUIRE(r.var_t >= 0.0);
    REQUIRE(r.var_sobol >= 0.0);
    const double half = 1.959963984540054 * std::sqrt(r.var_sobol / 3000.0);
    REQUIRE_THAT(r.ci_hi - r.sobol, WithinRel(half, 1e-9));
    REQUIRE_THAT(r.sobol - r.ci_lo, WithinRel(half, 1e-9));
    REQUIRE(r.n_used == 3000);
    REQUIRE(r.h_used == h);

    EstimateOptions o90;
    o90.ci_level = 0.9;
    const auto r90 = estimate_sobol(s, spec, kernel, h, density, o90);
    REQUIRE(r90.ci_hi - r90.ci_lo < r.ci_hi - r.ci_lo);
  }

  SECTION("scale invariance is exact, shift follows the bilinear identity") {
    const auto s = model.draw(800, 6);
    const double h = 0.1;
    const auto base = estimate_sobol(s, spec, kernel, h, density);
    FullSample sc = s;
    sc.Y *= -2.5;
    REQUIRE_THAT(estimate_sobol(sc, spec, kernel, h, density).sobol, WithinRel(base.sobol, 1e-12));

    // Adding c changes the index by [2c(B(Y,1) - Ybar) + c^2 (T(1) - 1)] / s_Y^2.
    const double c = 0.75;
    FullSample sh = s;
    sh.Y.array() += c;
    FullSample up = s;
    up.Y.array() += 1.0;
    FullSample down = s;
    down.Y.array() -= 1.0;
    FullSample ones = s;
    ones.Y.setOnes();
    const double b_y1 = (estimate_t(up, spec, kernel, h, density) - estimate_t(down, spec, kernel, h, density)) / 4.0;
    const double t11 = estimate_t(ones, spec, kernel, h, density);
    const double predicted = base.sobol + (2.0 * c * (b_y1 - base.mean_y) + c * c * (t11 - 1.0)) / base.var_y;
    REQUIRE_THAT(estimate_sobol(sh, spec, kernel, h, density).sobol, WithinAbs(predicted, 1e-11));
  }

  SECTION("constant output") {
    auto s = model.draw(100, 1);
    s.Y.setConstant(4.0);
    try {
      estimate_sobol(s, spec, kernel, 0.2, density);
      FAIL("expected degenerate output");
    } catch (const Error& e) {
      REQUIRE(e.code() == ErrorCode::degenerate_output);
    }
  }

  SECTION("linear model consistency, 100 seeds") {
    std::vector<double> errs;
    const double h = std::pow(5000.0, -0.4);
    for (std::uint64_t seed = 1; seed <= 100; ++seed)
      errs.push_back(std::abs(estimate_sobol(model.draw(5000, seed), spec, kernel, h, density).sobol - 1.0 / 3.0));
    REQUIRE(testing::median(errs) <= 0.05);
  }
}

TEST_CASE("leave-one-out regression", "[estimator]") {
  const auto inputs = unit_inputs(1);
  const SubsetSpec spec({0});
  const auto density = InputDensity::exact(inputs, spec);
  const auto kernel = kernel_of(2, 1);

  SECTION("constant one concentrates near one") {
    auto s = random_sample(2000, 1, 3);
    s.Y.setOnes();
    const auto g = estimate_g1_loo(s, spec, kernel, 0.1, density);
    REQUIRE_THAT(testing::mean(g), WithinAbs(1.0, 0.05));
  }

  SECTION("zero outputs") {
    auto s = random_sample(50, 1, 3);
    s.Y.setZero();
    for (double g : estimate_g1_loo(s, spec, kernel, 0.2, density)) REQUIRE(g == 0.0);
  }

  SECTION("n = 3 by hand") {
    FullSample s;
    s.V.resize(3, 1);
    s.V << 0.1, 0.2, 0.7;
    s.Y.resize(3);
    s.Y << 1.0, 2.0, 4.0;
    const double h = 1.0;
    const auto k1 = kernel_of(1, 1);
    const auto g = estimate_g1_loo(s, spec, k1, h, density);
    auto kh = [&](double u) { return k1_explicit(u / h) / h; };
    // Row 0 (sign +1): neighbours 0.2 and 0.7.
    REQUIRE_THAT(g[0], WithinRel((2.0 * kh(0.1) + 4.0 * kh(0.6)) / 2.0, 1e-13));
    REQUIRE_THAT(g[1], WithinRel((1.0 * kh(-0.1) + 4.0 * kh(0.5)) / 2.0, 1e-13));
    // Row 2 (sign -1): differences are negated.
    REQUIRE_THAT(g[2], WithinRel((1.0 * kh(0.6) + 2.0 * kh(0.5)) / 2.0, 1e-13));
    REQUIRE(g[0] != 0.0);
    REQUIRE(g[2] != 0.0);
  }
}

TEST_CASE("variance plug-ins", "[estimator]") {
  SECTION("zero outputs give zero") {
    const std::vector<double> y(10, 0.0);
    const std::vector<double> g(10, 0.3);
    REQUIRE(asymptotic_variance_t(y, g) == 0.0);
  }

  SECTION("doubling Y multiplies 4 tau^2 by 16") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> nd;
    std::vector<double> y(200);
    std::vector<double> g(200);
    for (std::size_t j = 0; j < 200; ++j) {
      y[j] = nd(gen);
      g[j] = nd(gen);
    }
    const double v = asymptotic_variance_t(y, g);
    for (auto& x : y) x *= 2.0;
    for (auto& x : g) x *= 2.0;
    REQUIRE_THAT(asymptotic_variance_t(y, g), WithinRel(16.0 * v, 1e-13));
  }

  SECTION("linear model p = 2: plug-in against the closed form") {
    // Y = U + W, g1 = U + 1/2 with U, W ~ U(0,1). E[U^a] = 1/(a+1).
    auto eu = [](int a) { return 1.0 / (a + 1.0); };
    // (U + W)(U + 1/2) = U^2 + U/2 + UW + W/2.
    const double m1 = eu(2) + eu(1) / 2.0 + eu(1) * eu(1) + eu(1) / 2.0;
    // Square of the same expression, expanded by hand.
    const double m2 = eu(4) + eu(2) / 4.0 + eu(2) * eu(2) + 0.25 * eu(2)  // squares
                      + 2.0 * (eu(3) / 2.0 + eu(3) * eu(1) + eu(2) * eu(1) / 2.0)  // U^2 x rest
                      + 2.0 * (eu(2) * eu(1) / 2.0 + eu(1) * eu(1) / 4.0)            // U/2 x (UW, W/2)
                      + 2.0 * (eu(1) * eu(2) / 2.0);                                 // UW x W/2
    const double four_tau2 = 4.0 * (m2 - m1 * m1);

    const auto model = linear_model(2);
    const SubsetSpec spec({0});
    const auto density = InputDensity::exact(model.inputs, spec);
    const auto s = model.draw(10000, 12);
    const auto y = detail::to_vector(s.Y);

    // Wide window: the pair spread is negligible and the literal plug-in applies.
    const auto g = estimate_g1_loo(s, spec, kernel_of(2, 1), 0.2, density);
    REQUIRE_THAT(asymptotic_variance_t(y, g), WithinRel(four_tau2, 0.10));

    // Narrow window: the literal plug-in is inflated by the pair spread;
    // the asymptotic correction removes it.
    const auto loo = estimate_loo_regression(s, spec, kernel_of(2, 1), 0.02, density);
    REQUIRE(asymptotic_variance_t(y, loo.g1) > 1.1 * four_tau2);
    REQUIRE_THAT(asymptotic_variance_t(y, loo, VarianceCorrection::asymptotic), WithinRel(four_tau2, 0.10));
  }

  SECTION("expanded and quadratic forms agree") {
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> y(100);
      std::vector<double> g(100);
      for (std::size_t j = 0; j < 100; ++j) {
        y[j] = 3.0 * u(gen) - 1.0;
        g[j] = y[j] * 0.5 + u(gen);
      }
      const auto m = variance_moments(y, g);
      const double s = u(gen);
      REQUIRE_THAT(sigma2_expanded(m, s), WithinRel(sigma2_quadratic(m, s), 1e-10));
    }
  }

  SECTION("S = 0 reduces to the first block") {
    std::vector<double> y{0.3, -1.2, 2.2, 0.9, -0.4, 1.1};
    std::vector<double> g{0.1, 0.2, -0.3, 0.5, 0.0, 0.7};
    const auto m = variance_moments(y, g);
    const double first = 4.0 * (m.var_yg - 2.0 * m.cov_yg_y * m.mean_y + m.mean_y * m.mean_y * m.var_y);
    REQUIRE_THAT(asymptotic_variance_sobol(y, g, 0.0), WithinRel(first / (m.var_y * m.var_y), 1e-13));
  }

  SECTION("row relabeling") {
    std::vector<double> y{0.3, -1.2, 2.2, 0.9, -0.4, 1.1};
    std::vector<double> g{0.1, 0.2, -0.3, 0.5, 0.0, 0.7};
    const double a = asymptotic_variance_sobol(y, g, 0.4);
    std::reverse(y.begin(), y.end());
    std::reverse(g.begin(), g.end());
    REQUIRE_THAT(asymptotic_variance_sobol(y, g, 0.4), WithinRel(a, 1e-13));
  }

  SECTION("correction ordering") {
    const auto model = linear_model(3);
    const SubsetSpec spec({0});
    const auto density = InputDensity::exact(model.inputs, spec);
    const auto s = model.draw(2000, 3);
    const auto y = detail::to_vector(s.Y);
    const auto loo = estimate_loo_regression(s, spec, kernel_of(2, 1), 0.05, density);
    const double plain = asymptotic_variance_t(y, loo, VarianceCorrection::plain);
    const double fin = asymptotic_variance_t(y, loo, VarianceCorrection::finite_sample);
    const double asym = asymptotic_variance_t(y, loo, VarianceCorrection::asymptotic);
    REQUIRE(plain == asymptotic_variance_t(y, loo.g1));
    REQUIRE(plain > fin);
    REQUIRE(fin > asym);
  }
}

TEST_CASE("standardized T errors look Gaussian", "[estimator]") {
  const auto model = linear_model(3);
  const SubsetSpec spec({0});
  const auto density = InputDensity::exact(model.inputs, spec);
  const auto kernel = kernel_of(2, 1);
  const std::size_t n = 4000;
  const double h = std::pow(static_cast<double>(n), -0.4);
  const double truth = model.true_t(spec);
  std::vector<double> z;
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    const auto r = estimate_sobol(model.draw(n, seed), spec, kernel, h, density);
    z.push_back(std::sqrt(static_cast<double>(n)) * (r.t_hat - truth) / std::sqrt(r.var_t));
  }
  const double p = testing::ks_normal_pvalue(z);
  INFO("KS p-value " << p);
  REQUIRE(p > 0.01);
}

TEST_CASE("first-order indices from one sample", "[estimator]") {
  const auto kernel = kernel_of(2, 1);

  SECTION("symmetric additive model") {
    const auto model = linear_model(3);
    const auto s = model.draw(5000, 21);
    const auto res = estimate_first_order_all(s, kernel, std::pow(5000.0, -0.4), model.inputs);
    REQUIRE(res.indices.size() == 3);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = a + 1; b < 3; ++b) {
        const double se = std::sqrt(std::max(res.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)),
                                             res.covariance(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(b))) /
                                    5000.0);
        REQUIRE(std::abs(res.indices[a].sobol - res.indices[b].sobol) <= 3.0 * se);
      }
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(res.covariance);
    REQUIRE(eig.eigenvalues().minCoeff() >= -1e-10);
    REQUIRE((res.covariance - res.covariance.transpose()).norm() == 0.0);
    // Each diagonal entry is the single-index plug-in variance.
    for (std::size_t i = 0; i < 3; ++i)
      REQUIRE_THAT(res.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)),
                   WithinRel(res.indices[i].var_sobol, 1e-8));
  }

  SECTION("p = 1 reduces to estimate_sobol") {
    const InputModel one({Uniform{0.0, 1.0}});
    FullSample s;
    s.V = sample(one, 500, 2);
    s.Y = (s.V.col(0).array() * 3.0).sin().matrix();
    s.Y += Eigen::VectorXd::Constant(500, 0.1);
    const auto all = estimate_first_order_all(s, kernel, 0.2, one);
    const auto single = estimate_sobol(s, SubsetSpec({0}), kernel, 0.2, InputDensity::exact(one, SubsetSpec({0})));
    REQUIRE(all.indices[0].sobol == single.sobol);
    REQUIRE_THAT(all.covariance(0, 0), WithinRel(single.var_sobol, 1e-10));
  }
}

TEST_CASE("plug-in density route", "[estimator]") {
  const auto inputs = unit_inputs(2);
  const SubsetSpec spec({0, 1});
  const auto density = InputDensity::exact(inputs, spec);
  const auto s = random_sample(300, 2, 31);
  const auto kernel = kernel_of(2, 2);
  REQUIRE(estimate_t_with_density_estimate(s, spec, kernel, 0.3, density) ==
          estimate_t(s, spec, kernel, 0.3, density));
}

TEST_CASE("estimator error paths", "[estimator]") {
  const auto inputs = unit_inputs(1);
  const SubsetSpec spec({0});
  const auto density = InputDensity::exact(inputs, spec);
  const auto kernel = kernel_of(2, 1);
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::invalid_argument;
  };

  const auto one = random_sample(1, 1, 1);
  REQUIRE(code_of([&] { estimate_t(one, spec, kernel, 0.2, density); }) == ErrorCode::insufficient_sample);

  const auto s = random_sample(20, 1, 1);
  REQUIRE(code_of([&] { estimate_t(s, spec, kernel, 0.0, density); }) == ErrorCode::invalid_bandwidth);
  REQUIRE(code_of([&] { estimate_t(s, spec, kernel, 1.5, density); }) == ErrorCode::bandwidth_too_large);
  REQUIRE(code_of([&] { estimate_t(s, spec, kernel_of(2, 2), 0.2, density); }) == ErrorCode::dimension_mismatch);
  REQUIRE(code_of([&] { estimate_t(s, SubsetSpec({3}), kernel, 0.2, density); }) == ErrorCode::invalid_argument);

  InputDensity vanishing = density;
  vanishing.f = [](std::span<const double> x) { return x[0] < 0.5 ? 0.0 : 2.0; };
  try {
    estimate_t(s, spec, kernel, 0.2, vanishing);
    FAIL("expected singular density");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::singular_density);
    // The message lists the first offending row.
    for (Eigen::Index j = 0; j < s.V.rows(); ++j) {
      if (s.V(j, 0) < 0.5) {
        REQUIRE(std::string(e.what()).find("rows: " + std::to_string(j)) != std::string::npos);
        break;
      }
    }
  }

  FullSample outside = s;
  outside.V(3, 0) = 1.5;
  REQUIRE(code_of([&] { estimate_t(outside, spec, kernel, 0.2, density); }) == ErrorCode::domain_violation);
}

TEST_CASE("default bandwidth", "[estimator]") {
  const Domain unit = Domain::unit_cube(1);
  // gamma = (1/4 + 1)/2 for k = 2, d = 1.
  REQUIRE_THAT(default_bandwidth(1000, 2, 1, unit), WithinRel(std::pow(1000.0, -0.625), 1e-14));
  const Domain wide({0.0, 0.0}, {4.0, 2.0});
  REQUIRE_THAT(default_bandwidth(1000, 2, 2, wide), WithinRel(2.0 * std::pow(1000.0, -0.375), 1e-14));
  REQUIRE_THROWS_AS(default_bandwidth(1000, 1, 2, wide), Error);
  REQUIRE_THROWS_AS(default_bandwidth(1000, 0, 1, unit), Error);
}
