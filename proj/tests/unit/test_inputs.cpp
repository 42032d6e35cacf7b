#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ksobol/inputs.hpp"
#include "ksobol/io.hpp"
#include "ksobol/quadrature.hpp"

using namespace ksobol;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("subset density", "[inputs]") {
  const InputModel unit(std::vector<Marginal>(3, Uniform{0.0, 1.0}));
  const std::vector<std::size_t> m01{0, 1};
  REQUIRE(density_subset(unit, m01, std::vector<double>{0.3, 0.9}) == 1.0);

  const InputModel beta({Beta{2.0, 2.0}});
  const std::vector<std::size_t> m0{0};
  // 0.5 * 0.5 / B(2, 2) with B(2, 2) = 1/6.
  REQUIRE_THAT(density_subset(beta, m0, std::vector<double>{0.5}), WithinRel(1.5, 1e-14));

  REQUIRE(density_subset(unit, std::vector<std::size_t>{}, std::vector<double>{}) == 1.0);
  REQUIRE(density_subset(unit, m0, std::vector<double>{1.5}) == 0.0);
  REQUIRE_THROWS_AS(density_subset(unit, m01, std::vector<double>{0.1}), Error);

  const InputModel scaled({Uniform{-2.0, 2.0}, Uniform{0.0, 0.5}});
  REQUIRE_THAT(density_subset(scaled, m01, std::vector<double>{0.0, 0.1}), WithinRel(0.5, 1e-15));
}

TEST_CASE("full-mask density integrates to one", "[inputs]") {
  const InputModel m({Beta{2.0, 3.0}, Uniform{-1.0, 2.0}});
  const std::vector<std::size_t> mask{0, 1};
  // Monte Carlo with the model's own sampler: E[f(V)/f(V)] is trivial, so
  // integrate over the bounding box with uniform proposals instead.
  Rng rng(99);
  const std::size_t n = 200000;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> x{rng.uniform_open(), -1.0 + 3.0 * rng.uniform_open()};
    acc += density_subset(m, mask, x) * 3.0;
  }
  REQUIRE_THAT(acc / static_cast<double>(n), WithinAbs(1.0, 1e-2));

  const double q = quad::tensor_integrate(
      [&](std::span<const double> x) { return density_subset(m, mask, x); }, std::vector<double>{0.0, -1.0},
      std::vector<double>{1.0, 2.0}, 20);
  REQUIRE_THAT(q, WithinAbs(1.0, 1e-6));
}

TEST_CASE("sampling", "[inputs]") {
  const InputModel unit(std::vector<Marginal>(2, Uniform{0.0, 1.0}));

  SECTION("deterministic given the seed") {
    const auto a = sample(unit, 500, 42);
    const auto b = sample(unit, 500, 42);
    REQUIRE(a == b);
    const auto c = sample(unit, 500, 43);
    REQUIRE_FALSE(a == c);
  }

  SECTION("uniform mean") {
    const std::size_t n = 100000;
    const auto v = sample(InputModel({Uniform{0.0, 1.0}}), n, 7);
    REQUIRE(std::abs(v.col(0).mean() - 0.5) <= 4.0 * std::sqrt(1.0 / (12.0 * n)));
  }

  SECTION("beta mean") {
    const std::size_t n = 100000;
    const auto v = sample(InputModel({Beta{2.0, 2.0}}), n, 8);
    // Var of Beta(2,2) is 1/20.
    REQUIRE(std::abs(v.col(0).mean() - 0.5) <= 5.0 * std::sqrt(0.05 / n));
  }

  SECTION("draws stay in the domain") {
    const InputModel m({Beta{0.5, 0.5}, Uniform{-3.0, -1.0}, Beta{5.0, 1.0}});
    const auto v = sample(m, 20000, 3);
    for (Eigen::Index j = 0; j < v.rows(); ++j) {
      const std::vector<double> row{v(j, 0), v(j, 1), v(j, 2)};
      REQUIRE(m.domain().contains(row));
    }
  }

  SECTION("columns come from independent streams") {
    const auto a = sample(InputModel({Uniform{0.0, 1.0}}), 100, 5);
    const auto b = sample(unit, 100, 5);
    REQUIRE(a.col(0) == b.col(0));
    REQUIRE_FALSE(b.col(0) == b.col(1));
  }
}

TEST_CASE("marginal validation", "[inputs]") {
  REQUIRE_THROWS_AS(Marginal(Uniform{1.0, 1.0}), Error);
  REQUIRE_THROWS_AS(Marginal(Beta{0.0, 1.0}), Error);
  Custom bad{[](double) { return 2.0; }, {0.0, 1.0}, [](double u) { return u; }};
  REQUIRE_THROWS_AS(Marginal(bad), Error);
  Custom tri{[](double x) { return 2.0 * x; }, {0.0, 1.0}, [](double u) { return std::sqrt(u); }};
  const Marginal m(tri);
  REQUIRE_THAT(m.mean(), WithinAbs(2.0 / 3.0, 1e-10));
  REQUIRE(m.pdf(1.5) == 0.0);
}

TEST_CASE("input model serialization", "[inputs]") {
  const InputModel m({Uniform{0.0, 2.0}, Beta{1.5, 1.25}});
  const auto j = to_json(m);
  REQUIRE(j.dump() == R"({"marginals":[{"uniform":[0.0,2.0]},{"beta":[1.5,1.25]}]})");
  const auto back = input_model_from_json(json::parse(j.dump()));
  REQUIRE(to_json(back) == j);
  REQUIRE_THROWS_AS(input_model_from_json(json::parse(R"({"marginals":[{"normal":[0,1]}]})")), Error);
  REQUIRE_THROWS_AS(input_model_from_json(json::parse(R"({"marginals":[{"uniform":[0]}]})")), Error);
}
