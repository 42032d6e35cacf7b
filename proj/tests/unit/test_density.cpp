#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "ksobol/density.hpp"
#include "ksobol/quadrature.hpp"
#include "ksobol/random.hpp"
#include "support.hpp"

using namespace ksobol;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double at(const DensityEstimate& est, double x) { return est(std::vector<double>{x}); }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::invalid_argument;
}

}  // namespace

TEST_CASE("uniform endpoint plug-in", "[density]") {
  SECTION("examples") {
    const auto est = uniform_max_estimator(std::vector<double>{0.2, 0.9, 0.5});
    REQUIRE(est.theta_hat == 0.9);
    REQUIRE(at(est, 0.5) == 1.0 / 0.9);
    REQUIRE(at(est, 0.0) == 1.0 / 0.9);
    REQUIRE(at(est, 0.9) == 1.0 / 0.9);
    REQUIRE(code_of([&] { at(est, 0.95); }) == ErrorCode::domain_violation);
    REQUIRE(uniform_max_estimator(std::vector<double>{0.4, 0.4, 0.4}).theta_hat == 0.4);
    REQUIRE(code_of([] { uniform_max_estimator(std::vector<double>{}); }) == ErrorCode::insufficient_sample);
    REQUIRE(code_of([] { uniform_max_estimator(std::vector<double>{0.3, -0.1}); }) == ErrorCode::invalid_data);
  }

  SECTION("squared error and exponential limit") {
    const std::size_t n = 10000;
    const int reps = 1000;
    Rng rng(2718);
    std::vector<double> scaled_gap;
    double sq = 0.0;
    for (int r = 0; r < reps; ++r) {
      std::vector<double> aux(n);
      for (auto& v : aux) v = rng.uniform01();
      const double theta_hat = uniform_max_estimator(aux).theta_hat;
      REQUIRE(theta_hat <= 1.0);
      sq += (theta_hat - 1.0) * (theta_hat - 1.0);
      scaled_gap.push_back(static_cast<double>(n) * (1.0 - theta_hat));
    }
    const double mse = sq / reps;
    const double exact = 2.0 / ((n + 1.0) * (n + 2.0));
    REQUIRE(mse <= 3.0 * exact);
    REQUIRE(mse >= exact / 3.0);
    // n (theta - theta_hat) tends to an exponential law with mean theta = 1.
    REQUIRE(std::abs(testing::mean(scaled_gap) - 1.0) <= 3.0 / std::sqrt(static_cast<double>(reps)));
  }
}

TEST_CASE("clipped beta moment plug-in", "[density]") {
  SECTION("accepted estimate") {
    const std::vector<double> aux{0.25, 0.75, 0.4, 0.6};
    const auto est = beta_moment_estimator(aux, 1.2);
    REQUIRE_THAT(est.a_hat, WithinRel(1.2, 1e-14));
    REQUIRE_FALSE(est.fallback);
    for (double x : {0.1, 0.5, 0.77}) {
      const double expected = std::pow(x, 0.2) * std::pow(1.0 - x, 0.2) / std::beta(1.2, 1.2);
      REQUIRE_THAT(at(est, x), WithinRel(expected, 1e-12));
    }
  }

  SECTION("fallback constant") {
    const auto est = beta_moment_estimator(std::vector<double>{0.85, 0.95}, 1.2);
    REQUIRE_THAT(est.a_hat, WithinRel(10.8, 1e-12));
    REQUIRE(est.fallback);
    // 2 int_0^1 sqrt(x(1-x)) dx with x = sin^2(t): the integrand becomes 2 sin^2 t cos^2 t.
    const auto rule = quad::gauss_legendre(40, 0.0, std::numbers::pi / 2.0);
    double integral = 0.0;
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
      const double s = std::sin(rule.nodes[q]);
      const double c = std::cos(rule.nodes[q]);
      integral += rule.weights[q] * 2.0 * s * s * c * c;
    }
    REQUIRE_THAT(at(est, 0.3), WithinRel(1.0 / (2.0 * integral), 1e-13));
    REQUIRE_THAT(at(est, 0.3), WithinAbs(1.2732, 1e-4));
  }

  SECTION("upper boundary a_hat = 3/2 is accepted") {
    bool found = false;
    for (double b = 1.01; b < 1.5 && !found; b += 0.001) {
      const double m = 1.5 / (1.5 + b);
      if (b * m / (1.0 - m) != 1.5) continue;
      const auto est = beta_moment_estimator(std::vector<double>{m}, b);
      REQUIRE(est.a_hat == 1.5);
      REQUIRE_FALSE(est.fallback);
      found = true;
    }
    REQUIRE(found);
  }

  SECTION("fallback exactly outside the mean window") {
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
      const double b = 1.0 + 0.5 * rng.uniform_open();
      const double m = 0.05 + 0.9 * rng.uniform01();
      const double lo = 1.0 / (1.0 + b);
      const double hi = 1.5 / (1.5 + b);
      if (std::abs(m - lo) < 1e-9 || std::abs(m - hi) < 1e-9) continue;
      const auto est = beta_moment_estimator(std::vector<double>{m}, b);
      REQUIRE(est.fallback == (m < lo || m > hi));
    }
  }

  SECTION("errors") {
    REQUIRE(code_of([] { beta_moment_estimator(std::vector<double>{0.5}, 1.5); }) == ErrorCode::invalid_argument);
    REQUIRE(code_of([] { beta_moment_estimator(std::vector<double>{0.5}, 1.0); }) == ErrorCode::invalid_argument);
    REQUIRE(code_of([] { beta_moment_estimator(std::vector<double>{0.5, 1.0}, 1.2); }) == ErrorCode::invalid_data);
    REQUIRE(code_of([] { beta_moment_estimator(std::vector<double>{}, 1.2); }) == ErrorCode::insufficient_sample);
  }
}

TEST_CASE("mirror kernel density estimate", "[density]") {
  const auto unit = Domain::unit_cube(1);
  const auto k2 = tensorize(build_kernel_1d(BaseDensity::uniform_half(), 2), 1);

  SECTION("single auxiliary point") {
    Eigen::MatrixXd aux(1, 1);
    aux << 0.3;
    const double h = 0.2;
    const auto est = mirror_kde(aux, k2, h, 0.5, unit);
    const double k0 = k2.factor()(0.0) / h;
    REQUIRE_THAT(at(est, 0.3), WithinRel(std::max(k0, 0.25), 1e-14));
    REQUIRE(at(est, 0.9) == 0.25);
  }

  SECTION("floor holds everywhere") {
    const auto aux = sample(InputModel({Beta{2.0, 5.0}}), 300, 4);
    const auto est = mirror_kde(aux, k2, 0.1, 0.8, unit);
    for (int i = 0; i <= 500; ++i) REQUIRE(at(est, i / 500.0) >= 0.4);
    REQUIRE(est.floor == 0.4);
  }

  SECTION("integrated squared error on uniform data") {
    const std::size_t m = 5000;
    const auto aux = sample(InputModel({Uniform{0.0, 1.0}}), m, 12);
    const double h = std::pow(static_cast<double>(m), -0.2);
    const auto est = mirror_kde(aux, k2, h, 0.1, unit);
    double ise = 0.0;
    for (int i = 0; i < 200; ++i) {
      const double x = (i + 0.5) / 200.0;
      ise += (at(est, x) - 1.0) * (at(est, x) - 1.0) / 200.0;
    }
    REQUIRE(ise <= 0.05);
  }

  SECTION("errors") {
    Eigen::MatrixXd aux(2, 1);
    aux << 0.2, 0.6;
    REQUIRE(code_of([&] { mirror_kde(aux, k2, 1.5, 0.5, unit); }) == ErrorCode::bandwidth_too_large);
    REQUIRE(code_of([&] { mirror_kde(aux, k2, 0.0, 0.5, unit); }) == ErrorCode::invalid_bandwidth);
    REQUIRE(code_of([&] { mirror_kde(aux, k2, 0.2, 0.0, unit); }) == ErrorCode::invalid_argument);
    Eigen::MatrixXd outside(1, 1);
    outside << 1.3;
    REQUIRE(code_of([&] { mirror_kde(outside, k2, 0.2, 0.5, unit); }) == ErrorCode::domain_violation);
  }

  SECTION("default bandwidth") {
    REQUIRE_THAT(default_kde_bandwidth(1000, 2, 1, unit), WithinRel(std::pow(1000.0, -0.2), 1e-14));
    REQUIRE_THAT(default_kde_bandwidth(1000, 2, 2, Domain({0.0, 0.0}, {0.5, 2.0})),
                 WithinRel(0.5 * std::pow(1000.0, -1.0 / 6.0), 1e-14));
  }
}

TEST_CASE("plug-in mean-square diagnostic", "[density]") {
  const std::vector<double> f{1.0, 2.0, 0.5};
  REQUIRE(plugin_mse_diagnostic(f, f, 0.1, 100).ratio == 0.0);

  const std::vector<double> g{1.1, 2.0, 0.5};
  const std::vector<double> g2{1.3, 2.0, 0.5};
  const auto a = plugin_mse_diagnostic(f, g, 0.1, 100);
  const auto b = plugin_mse_diagnostic(f, g2, 0.1, 100);
  REQUIRE(b.mse > a.mse);
  REQUIRE(b.ratio > a.ratio);
  REQUIRE_THAT(a.mse, WithinRel((0.1 / 1.1) * (0.1 / 1.1) / 3.0, 1e-14));
  REQUIRE_THAT(a.scale, WithinRel(0.1 / 100.0, 1e-14));

  // Uniform endpoint plug-in at n = 1e4: relative error is far below h/n.
  const std::size_t n = 10000;
  Rng rng(77);
  std::vector<double> aux(n);
  for (auto& v : aux) v = rng.uniform01();
  const auto est = uniform_max_estimator(aux);
  const std::vector<double> truth(n, 1.0);
  std::vector<double> fhat(n);
  for (std::size_t j = 0; j < n; ++j) fhat[j] = at(est, aux[j]);
  const auto rep = plugin_mse_diagnostic(truth, fhat, std::pow(static_cast<double>(n), -0.4), n);
  REQUIRE(rep.ratio < 1e-2);
}
