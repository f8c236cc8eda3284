#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "bpe/geometry.hpp"
#include "bpe/point.hpp"

using namespace bpe;

TEST_SUITE("geometry") {
  TEST_CASE("points round trip through complex coordinates") {
    const std::vector<std::complex<double>> z{{1.0, 2.0}, {-3.0, 0.5}};
    const PointCd p = PointCd::from_complex(z);
    CHECK(p.complex_dim() == 2);
    CHECK(p.real_dim() == 4);
    CHECK(p.zeta(1) == z[1]);
    CHECK(p.to_complex() == z);
    CHECK(p.norm() == doctest::Approx(std::sqrt(1 + 4 + 9 + 0.25)));
    CHECK(p.distance(PointCd::zero(2)) == doctest::Approx(p.norm()));
  }

  TEST_CASE("points reject odd or mismatched dimensions") {
    CHECK_THROWS_AS(PointCd(std::vector<double>{1.0, 2.0, 3.0}), DimensionMismatch);
    CHECK_THROWS_AS(PointCd::zero(1).distance(PointCd::zero(2)), DimensionMismatch);
    CHECK_THROWS_AS(PointCd::zero(0), DimensionMismatch);
  }

  TEST_CASE("ball boundary flag decides membership on the sphere") {
    const auto open = ImplicitSet::ball(std::vector<double>{0, 0}, 1.0, Boundary::open);
    const auto closed = ImplicitSet::ball(std::vector<double>{0, 0}, 1.0, Boundary::closed);
    const std::vector<double> on{1.0, 0.0};
    CHECK_FALSE(open.contains(on));
    CHECK(closed.contains(on));
    CHECK(open.contains(std::vector<double>{0.5, 0.5}));
  }

  TEST_CASE("set algebra membership") {
    const auto a = ImplicitSet::ball(std::vector<double>{0, 0}, 1.0);
    const auto b = ImplicitSet::box({0, -2}, {2, 2});
    const std::vector<double> left{-0.5, 0.0}, right{0.5, 0.0}, far{1.5, 0.0};
    CHECK(subtract(a, b).contains(left));
    CHECK_FALSE(subtract(a, b).contains(right));
    CHECK(intersect(a, b).contains(right));
    CHECK(unite(a, b).contains(far));
    CHECK_FALSE(a.contains(far));
    const auto hs = ImplicitSet::halfspace({1, 0}, 0.0);
    CHECK(hs.contains(left));
    CHECK_FALSE(hs.contains(right));
  }

  TEST_CASE("JSON round trip preserves the canonical form and hash") {
    const auto set = subtract(ImplicitSet::ball(std::vector<double>{0, 0}, 1.0),
                              unite(ImplicitSet::ball(std::vector<double>{0.375, 0}, 1.0 / 256, Boundary::closed),
                                    ImplicitSet::box({-0.1, -0.1}, {0.1, 0.1})));
    const auto back = ImplicitSet::from_json(set.to_json());
    CHECK(back.canonical_json() == set.canonical_json());
    CHECK(back.hash() == set.hash());
    CHECK(set.hash().size() == 64);
    CHECK(set.hash() != ImplicitSet::ball(std::vector<double>{0, 0}, 1.0).hash());
  }

  TEST_CASE("sha256 of a known message") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("normalized sets agree with the original under the affine map") {
    const auto set = subtract(ImplicitSet::ball(std::vector<double>{1, 2}, 0.5),
                              ImplicitSet::ball(std::vector<double>{1.2, 2}, 0.1, Boundary::closed));
    const std::vector<double> shift{1, 2};
    const double factor = 0.25;
    const auto local = set.normalized(shift, factor);
    for (double x = -2.0; x <= 2.0; x += 0.13)
      for (double y = -2.0; y <= 2.0; y += 0.17) {
        const std::vector<double> pl{x, y};
        const std::vector<double> p{shift[0] + factor * x, shift[1] + factor * y};
        CHECK(local.contains(pl) == set.contains(p));
      }
  }

  TEST_CASE("bounding boxes and box queries") {
    const auto ball = ImplicitSet::ball(std::vector<double>{1, -1}, 2.0);
    const Box& bb = ball.bbox();
    CHECK(bb.lo == std::vector<double>{-1, -3});
    CHECK(bb.hi == std::vector<double>{3, 1});
    CHECK(bb.center() == std::vector<double>{1, -1});
    CHECK(bb.half_diagonal() == doctest::Approx(std::sqrt(8.0)));
    CHECK(ball.cell_inside(Box{{0.9, -1.1}, {1.1, -0.9}}));
    CHECK(ball.cell_outside(Box{{5, 5}, {6, 6}}));
    CHECK_FALSE(ball.cell_inside(Box{{2.5, -1.1}, {3.5, -0.9}}));
  }

  TEST_CASE("provable relations") {
    const auto small = ImplicitSet::ball(std::vector<double>{0, 0}, 0.5);
    const auto big = ImplicitSet::ball(std::vector<double>{0, 0}, 1.0);
    const auto far = ImplicitSet::ball(std::vector<double>{5, 0}, 1.0);
    CHECK(provably_subset(small, big));
    CHECK_FALSE(provably_subset(big, small));
    CHECK(provably_disjoint(big, far));
    CHECK_FALSE(provably_disjoint(big, small));
  }

  TEST_CASE("decompose splits disjoint unions and drops empty pieces") {
    const auto a = ImplicitSet::ball(std::vector<double>{0, 0}, 0.1);
    const auto b = ImplicitSet::ball(std::vector<double>{1, 0}, 0.1);
    CHECK(decompose(unite(a, b)).size() == 2);
    CHECK(decompose(ImplicitSet::empty(2)).empty());
  }

  TEST_CASE("shells about x") {
    const PointCd x = PointCd::zero(1);
    const AnnulusShell s = shell_radii(x, 3);
    CHECK(s.inner_radius == 0.0625);
    CHECK(s.outer_radius == 0.125);
    const auto shell = annulus_shell(x, 3);
    CHECK(shell.contains(std::vector<double>{0.1, 0.0}));
    CHECK_FALSE(shell.contains(std::vector<double>{0.0625, 0.0}));
    CHECK_FALSE(shell.contains(std::vector<double>{0.125, 0.0}));
    const auto triple = triple_shell(x, 3);
    CHECK(triple.contains(std::vector<double>{0.0625, 0.0}));
    CHECK(triple.contains(std::vector<double>{0.2, 0.0}));
    CHECK_FALSE(triple.contains(std::vector<double>{0.25, 0.0}));
    CHECK_THROWS_AS(shell_radii(x, 0), std::invalid_argument);
  }

  TEST_CASE("shell minus a domain that contains it is empty") {
    const auto disk = ImplicitSet::ball(std::vector<double>{0, 0}, 1.0);
    for (int n = 1; n <= 6; ++n) CHECK(decompose(shell_minus_domain(PointCd::zero(1), n, disk)).empty());
  }

  TEST_CASE("Swiss cheese places one hole per shell") {
    const PointCd x = PointCd::zero(1);
    const auto cheese = make_swiss_cheese(x, [](int n) { return std::ldexp(1.0, -8 * n); }, 1, 4);
    for (int n = 1; n <= 4; ++n) {
      const PointCd c = swiss_cheese_hole_center(x, n);
      CHECK_FALSE(cheese.contains(c));
      CHECK(annulus_shell(x, n).contains(c));
      CHECK(decompose(shell_minus_domain(x, n, cheese)).size() == 1);
    }
    CHECK(cheese.contains(std::vector<double>{-0.5, 0.0}));
    CHECK_THROWS_AS(make_swiss_cheese(x, [](int n) { return std::ldexp(1.0, -(n + 2)); }, 1, 2), HoleTooLarge);
  }
}
