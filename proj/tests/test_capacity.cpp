#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "bpe/capacity.hpp"
#include "bpe/geometry.hpp"
#include "bpe/grid.hpp"

using namespace bpe;

namespace {

ScalarField bump_field(const Grid& g) {
  ScalarField u(g);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (g.on_outer_layer(i)) continue;
    const auto c = g.node_coords(i);
    u[i] = std::max(0.0, 1.0 - std::hypot(c[0], c[1]));
  }
  return u;
}

// omega_{n-1} (integral_r^R s^(-(n-1)/(q-1)) ds)^(1-q) by composite Simpson in log s.
double radial_quadrature(double r, double R, double q, int n) {
  const int m = 20000;
  const double a = std::log(r), b = std::log(R), h = (b - a) / m;
  const auto f = [&](double t) { return std::exp(t) * std::pow(std::exp(t), -(n - 1) / (q - 1)); };
  double s = f(a) + f(b);
  for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  s *= h / 3.0;
  const double omega = 2.0 * std::pow(std::numbers::pi, n / 2.0) / std::tgamma(n / 2.0);
  return omega * std::pow(s, 1.0 - q);
}

ImplicitSet disk(double r, double cx = 0.0) {
  return ImplicitSet::ball(std::vector<double>{cx, 0}, r, Boundary::closed);
}

}  // namespace

TEST_SUITE("capacity") {
  TEST_CASE("q-energy is positively homogeneous of degree q") {
    const Grid g = Grid::covering(Box{{-1, -1}, {1, 1}}, 1.0 / 16, 1);
    const ScalarField u = bump_field(g);
    for (double q : {1.2, 1.5, 1.9}) {
      const double e = q_energy(u, q);
      for (double lambda : {0.3, 2.0, 7.5}) {
        ScalarField v = u;
        for (double& x : v.values) x *= lambda;
        CHECK(std::abs(q_energy(v, q) - std::pow(lambda, q) * e) <= 1e-12 * std::pow(lambda, q) * e);
      }
    }
  }

  TEST_CASE("hat profile has unit gradient over twice its strip length") {
    const double h = 1.0 / 16, L = 1.5;
    const Grid g({-2.0, 0.0}, h, {65, 25});
    ScalarField u(g);
    for (std::size_t i = 0; i < g.node_count(); ++i) u[i] = std::max(0.0, 1.0 - std::abs(g.node_coords(i)[0]));
    for (double p : {1.0, 1.5, 3.0}) CHECK(gradient_power_sum(u, p) == doctest::Approx(2.0 * L).epsilon(1e-12));
  }

  TEST_CASE("q-energy requires zero on the outer layer and an admissible exponent") {
    const Grid g({0.0, 0.0}, 0.5, {4, 4});
    ScalarField u(g, 1.0);
    CHECK_THROWS(q_energy(u, 1.5));
    CHECK_THROWS_AS(require_exponent(2.0, 2), ExponentOutOfRange);
    CHECK_THROWS_AS(require_exponent(1.0, 4), ExponentOutOfRange);
    CHECK_NOTHROW(require_exponent(3.5, 4));
  }

  TEST_CASE("smoothed energy tends to the plain energy") {
    const Grid g = Grid::covering(Box{{-1, -1}, {1, 1}}, 1.0 / 16, 1);
    const ScalarField u = bump_field(g);
    const double e = q_energy(u, 1.5);
    CHECK(smoothed_q_energy(u, 1.5, 0.0) == doctest::Approx(e).epsilon(1e-14));
    CHECK(smoothed_q_energy(u, 1.5, 1e-6) == doctest::Approx(e).epsilon(1e-6));
    CHECK(smoothed_q_energy(u, 1.5, 1e-2) > e);
  }

  TEST_CASE("radial oracle matches its closed forms and an independent quadrature") {
    CHECK(radial_capacity_oracle(1, 2, 2, 4) == doctest::Approx(16 * std::numbers::pi * std::numbers::pi / 3));
    CHECK(radial_capacity_oracle(1, 8, 1.5, 2) == doctest::Approx(6.7167).epsilon(1e-4));
    for (double q : {1.3, 1.5, 1.8})
      CHECK(radial_capacity_oracle(1, 8, q, 2) == doctest::Approx(radial_quadrature(1, 8, q, 2)).epsilon(1e-9));
    CHECK(radial_capacity_oracle(0.5, 3, 2.5, 4) == doctest::Approx(radial_quadrature(0.5, 3, 2.5, 4)).epsilon(1e-9));
    CHECK(radial_capacity_oracle(1, INFINITY, 1.5, 2) < radial_capacity_oracle(1, 8, 1.5, 2));
  }

  TEST_CASE("minimizer respects the constraints and its energy reproduces the value") {
    const std::vector<double> ladder{0.125, 0.0625};
    const CapacityEstimate est = estimate_capacity(disk(0.5), 1.5, ladder, 2.0);
    REQUIRE(est.field);
    const ScalarField& u = *est.field;
    CHECK(q_energy(u, 1.5) == doctest::Approx(est.value).epsilon(1e-12));
    const NodeMask target = rasterize(disk(0.5), u.grid);
    for (std::size_t i = 0; i < u.size(); ++i) {
      CHECK(u[i] >= 0.0);
      if (target[i]) CHECK(u[i] >= 1.0);
    }
    CHECK(est.trend.size() == 2);
    CHECK(est.resolution == 0.0625);
    CHECK(est.value == doctest::Approx(radial_capacity_oracle(0.5, 2, 1.5, 2)).epsilon(0.15));
  }

  TEST_CASE("continuation stages are non-increasing") {
    const Grid g = Grid::covering(Box{{-2, -2}, {2, 2}}, 0.125, 1);
    const NodeMask target = rasterize(disk(0.5), g);
    const NodeMask support = point_mask(ImplicitSet::ball(std::vector<double>{0, 0}, 2.0), g);
    const SolveResult r = minimize_q_energy(target, 1.5, {}, &support);
    REQUIRE(r.stage_energies.size() == 3);
    for (std::size_t k = 1; k < r.stage_energies.size(); ++k)
      CHECK(r.stage_energies[k] <= r.stage_energies[k - 1]);
    CHECK(r.energy == r.stage_energies.back());
  }

  TEST_CASE("fixed-grid monotonicity and subadditivity") {
    const std::vector<double> ladder{0.0625};
    const double R = 3.0;
    const auto support = ImplicitSet::ball(std::vector<double>{0, 0}, R);
    const auto small = disk(0.3, -0.5), big = disk(0.6, -0.5), other = disk(0.3, 0.6);
    const auto c_small = estimate_capacity(small, 1.5, ladder, support);
    const auto c_big = estimate_capacity(big, 1.5, ladder, support);
    const auto c_other = estimate_capacity(other, 1.5, ladder, support);
    const auto c_union = estimate_capacity(unite(small, other), 1.5, ladder, support);
    CHECK(c_small.value <= c_big.value + 2 * std::max(c_small.abs_tolerance, c_big.abs_tolerance));
    CHECK(c_union.value <= c_small.value + c_other.value + 2 * c_union.abs_tolerance);
    CHECK(c_union.value >= c_small.value - 2 * c_union.abs_tolerance);
  }

  TEST_CASE("capacity scales as lambda^(2d-q) under matched grids") {
    const double q = 1.5;
    const auto at = [&](double r) {
      const std::vector<double> ladder{r / 8, r / 16};
      return estimate_capacity(disk(r), q, ladder, 4 * r).value;
    };
    const double base = at(1.0);
    for (double lambda : {0.5, 2.0}) CHECK(at(lambda) / base == doctest::Approx(std::pow(lambda, 2 - q)).epsilon(1e-4));
  }

  TEST_CASE("empty and unresolvable sets give zero") {
    const std::vector<double> ladder{0.125};
    const auto none = estimate_capacity(ImplicitSet::empty(2), 1.5, ladder, 1.0);
    CHECK(none.value == 0.0);
    CHECK(none.warnings.empty());
    const auto tiny = estimate_capacity(ImplicitSet::ball(std::vector<double>{0.01, 0}, 1e-4, Boundary::closed), 1.5,
                                        ladder, 1.0);
    CHECK(tiny.value == 0.0);
    REQUIRE(tiny.warnings.size() == 1);
    CHECK(tiny.warnings[0].find("possibly-positive-capacity-missed") == 0);
  }

  TEST_CASE("a single constrained node") {
    const Grid g({-1.0, -1.0}, 0.5, {5, 5});
    NodeMask target(g);
    target.set(12, true);
    const SolveResult r = minimize_q_energy(target, 1.5);
    CHECK(r.field[12] >= 1.0);
    CHECK(r.energy > 0.0);
    CHECK(r.energy == doctest::Approx(q_energy(r.field, 1.5)).epsilon(1e-12));
  }

  TEST_CASE("estimate JSON round trip") {
    const std::vector<double> ladder{0.25, 0.125};
    const auto est = estimate_capacity(disk(0.5), 1.5, ladder, 2.0);
    const auto back = CapacityEstimate::from_json(est.to_json());
    CHECK(back.value == est.value);
    CHECK(back.iterations == est.iterations);
    CHECK(back.trend.size() == est.trend.size());
    CHECK_FALSE(back.field);
    CHECK(back.to_json() == est.to_json());
  }

  TEST_CASE("support must contain the set") {
    const std::vector<double> ladder{0.125};
    CHECK_THROWS_AS(estimate_capacity(disk(1.0), 1.5, ladder, ImplicitSet::ball(std::vector<double>{0, 0}, 0.5)),
                    std::invalid_argument);
  }
}
