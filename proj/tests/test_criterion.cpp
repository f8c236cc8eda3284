#include <doctest.h>

#include <cmath>
#include <complex>
#include <sstream>
#include <string>
#include <vector>

#include "bpe/criterion.hpp"
#include "bpe/geometry.hpp"

using namespace bpe;

namespace {

CriterionReport synthetic(const std::vector<double>& terms, std::vector<bool> resolved = {}) {
  CriterionReport r;
  double sum = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    ShellRecord s;
    s.n = static_cast<int>(i) + 1;
    s.term = terms[i];
    s.resolved = resolved.empty() ? true : resolved[i];
    sum += s.term;
    s.partial_sum = sum;
    r.shells.push_back(s);
  }
  apply_verdict(r);
  return r;
}

std::vector<double> geometric(double first, double ratio, int count) {
  std::vector<double> t;
  for (int i = 0; i < count; ++i) t.push_back(first * std::pow(ratio, i));
  return t;
}

}  // namespace

TEST_SUITE("criterion") {
  TEST_CASE("Holder conjugate") {
    CHECK(holder_conjugate(2.0) == 2.0);
    CHECK(holder_conjugate(3.0) == doctest::Approx(1.5));
    CHECK_THROWS_AS(holder_conjugate(1.0), ConfigError);
    CHECK_THROWS_AS(holder_conjugate(INFINITY), ConfigError);
  }

  TEST_CASE("shell weights in log space") {
    CHECK(weight_log2(3, 1.5, 1) == doctest::Approx(4.5));
    CHECK(weight_log2(2, 1.5, 2) == doctest::Approx(9.0));
    CHECK(weighted_term(3, 0.25, 1.5, 1) == doctest::Approx(std::exp2(4.5) * 0.25));
    CHECK(weighted_term(40, 0.0, 3.5, 2) == 0.0);
    CHECK(std::isfinite(weighted_term(40, 1e-150, 3.5, 2)));
    CHECK_THROWS(weighted_term(1, -1.0, 1.5, 1));
  }

  TEST_CASE("config validation") {
    CriterionConfig c;
    CHECK_NOTHROW(c.validate());
    c.p = 2.0;  // q = 2 = 2d for d = 1
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.d = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.x = PointCd::zero(2);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.n_min = 5;
    c.n_max = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.ladder.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("verdict: all terms zero") {
    const auto r = synthetic({0, 0, 0});
    CHECK(r.verdict == Verdict::converges);
    CHECK(*r.tail_estimate == 0.0);
  }

  TEST_CASE("verdict: zero terms with an unresolved shell are not conclusive by rule (a)") {
    const auto r = synthetic({0, 0, 0}, {true, false, true});
    CHECK(r.verdict == Verdict::inconclusive);
  }

  TEST_CASE("verdict: geometric decay converges with a tail estimate") {
    const auto r = synthetic(geometric(1.0, 0.25, 6));
    CHECK(r.verdict == Verdict::converges);
    CHECK(*r.fitted_ratio == doctest::Approx(0.25));
    CHECK(*r.tail_estimate == doctest::Approx(std::pow(0.25, 5) * 0.25 / 0.75));
  }

  TEST_CASE("verdict: growth diverges") {
    const auto r = synthetic(geometric(1.0, 2.0, 6));
    CHECK(r.verdict == Verdict::diverges);
    CHECK(*r.fitted_ratio == doctest::Approx(2.0));
    CHECK_FALSE(r.tail_estimate);
  }

  TEST_CASE("verdict: slow decay and flat terms are inconclusive") {
    CHECK(synthetic(geometric(1.0, 0.9, 6)).verdict == Verdict::inconclusive);
    CHECK(synthetic(geometric(1.0, 1.0, 8)).verdict == Verdict::inconclusive);
    CHECK(synthetic({1.0, 0.0, 0.5, 0.0, 0.2}).verdict == Verdict::inconclusive);
    CHECK(synthetic({1.0, 0.5, 0.25}).verdict == Verdict::inconclusive);
  }

  TEST_CASE("verdict: trailing zero window converges") {
    const auto r = synthetic({3.0, 1.0, 0, 0, 0, 0, 0});
    CHECK(r.verdict == Verdict::converges);
    CHECK(*r.tail_estimate == 0.0);
  }

  TEST_CASE("geometric fit") {
    const std::vector<double> t{8, 4, 2, 1};
    CHECK(fit_geometric_ratio(t) == doctest::Approx(0.5));
    CHECK_THROWS(fit_geometric_ratio(std::vector<double>{1.0}));
    CHECK_THROWS(fit_geometric_ratio(std::vector<double>{1.0, 0.0}));
  }

  TEST_CASE("report strings stay within the sufficiency reading") {
    const auto r = synthetic(geometric(1.0, 2.0, 6));
    CHECK(r.conclusion.find("no conclusion for d > 1") != std::string::npos);
    bool sufficient_note = false;
    for (const auto& n : r.notes) sufficient_note = sufficient_note || n.find("sufficient only") != std::string::npos;
    CHECK(sufficient_note);
  }

  TEST_CASE("CSV has the fixed header and one row per shell") {
    const auto r = synthetic({0.5, 0.25, 0.125});
    std::istringstream in(r.to_csv());
    std::string line;
    std::getline(in, line);
    CHECK(line == "n,capacity,weight_log2,term,partial_sum,resolved");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3);
    const auto j = r.to_json();
    CHECK(j.at("shells").size() == 3);
    CHECK(j.at("verdict") == "inconclusive");
  }

  TEST_CASE("interior point: every term is exactly zero") {
    CriterionConfig c;
    c.n_max = 8;
    const auto disk = ImplicitSet::ball(std::vector<double>{0, 0}, 1.0);
    const auto r = evaluate_criterion(disk, c);
    CHECK(r.verdict == Verdict::converges);
    CHECK(r.shells.size() == 8);
    for (const auto& s : r.shells) {
      CHECK(s.term == 0.0);
      CHECK(s.exactly_empty);
    }
  }

  TEST_CASE("boundary point of a translated disk: terms grow") {
    CriterionConfig c;
    c.n_max = 5;
    c.ladder = {0.125, 0.0625};
    const auto disk = ImplicitSet::ball(std::vector<double>{1, 0}, 1.0);
    const auto r = evaluate_criterion(disk, c, nullptr, 2);
    CHECK(r.verdict == Verdict::diverges);
    CHECK(*r.fitted_ratio >= std::pow(2.0, 2 * (c.q() - 1)) * 0.5);
    for (std::size_t k = 1; k < r.shells.size(); ++k) CHECK(r.shells[k].term > r.shells[k - 1].term);
  }

  TEST_CASE("worker count does not change the report") {
    CriterionConfig c;
    c.n_max = 4;
    c.ladder = {0.125};
    const auto cheese = make_swiss_cheese(c.x, [](int n) { return std::ldexp(1.0, -8 * n); }, 1, 4);
    CHECK(evaluate_criterion(cheese, c, nullptr, 1).to_json() == evaluate_criterion(cheese, c, nullptr, 3).to_json());
  }

  TEST_CASE("closure note when x is far from the domain") {
    CriterionConfig c;
    c.n_max = 2;
    const auto far = ImplicitSet::ball(std::vector<double>{5, 0}, 1.0);
    const auto r = evaluate_criterion(far, c);
    bool noted = false;
    for (const auto& n : r.notes) noted = noted || n.find("closure") != std::string::npos;
    CHECK(noted);
  }

  TEST_CASE("probe families") {
    CHECK(polynomial_family(2, 2).size() == 6);
    CHECK(polynomial_family(1, 3).size() == 4);
    const std::vector<Complex> poles{{2.0, 0.0}, {0.0, 3.0}};
    const auto fam = pole_family(poles, 1, 2);
    REQUIRE(fam.size() == 4);
    const PointCd z = PointCd::zero(1);
    CHECK(std::abs(fam[0](z) - 1.0 / Complex(-2.0, 0.0)) < 1e-15);
    CHECK(std::abs(fam[2](z) - 1.0 / Complex(4.0, 0.0)) < 1e-15);
    CHECK(fam[1].poles.size() == 1);
  }

  TEST_CASE("evaluation probe") {
    const auto disk = ImplicitSet::ball(std::vector<double>{0, 0}, 1.0);
    const Grid g = Grid::covering(disk.bbox(), 1.0 / 64, 0);
    const auto fam = polynomial_family(1, 0);
    const ProbeResult r = evaluation_norm_probe(disk, PointCd::zero(1), 2.0, fam, g);
    CHECK(r.value == doctest::Approx(1.0 / std::sqrt(std::numbers::pi)).epsilon(0.02));
    const std::vector<Complex> inside{{0.0, 0.0}};
    CHECK_THROWS_AS(evaluation_norm_probe(disk, PointCd::from_complex(std::vector<Complex>{{0.5, 0.5}}), 2.0,
                                          pole_family(inside, 1, 1), g),
                    ProbeRejected);
  }
}
