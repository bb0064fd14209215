#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "modeldisc/scoring.hpp"

using namespace modeldisc;

TEST_CASE("bic hand arithmetic") {
  // 246.8 + 5 ln 100
  CHECK(std::abs(bic(-123.4, 5, 100) - 269.8259) <= 1e-4);
  CHECK(bic(0.0, 1, 1) == 0.0);
  CHECK(bic(-10.0, 4, 50) - bic(-10.0, 3, 50) == doctest::Approx(std::log(50.0)));
}

TEST_CASE("vic hand arithmetic") {
  CHECK(vic(269.8259, 120.0, 50.0) == doctest::Approx(5730.1741));
  CHECK(vic(12.5, 100.0, 0.0) == -12.5);
  CHECK(kDefaultAlpha == 50.0);
}

TEST_CASE("score records clamp components and keep vic exact") {
  const auto r = make_score_record(100.0, 61.0, -3.0, 20.0, 50.0, 2);
  CHECK(r.fitness_score == 50.0);
  CHECK(r.generalizability_score == 20.0);
  CHECK(r.evaluator_total == 70.0);
  CHECK(r.vic == 50.0 * 70.0 - 100.0);
  CHECK(r.round_index == 2);
}

TEST_CASE("property: alpha zero ranks exactly like bic") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ll(-500.0, 50.0);
  std::uniform_real_distribution<double> tot(0.0, 150.0);
  std::uniform_int_distribution<int> k(1, 12), n(2, 300), size(1, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = size(rng);
    const int n_data = n(rng);
    std::size_t best_vic = 0, best_bic = 0;
    double vmax = -INFINITY, bmin = INFINITY;
    for (int i = 0; i < m; ++i) {
      const double b = bic(ll(rng), k(rng), n_data);
      const double v = vic(b, tot(rng), 0.0);
      if (v > vmax) {
        vmax = v;
        best_vic = i;
      }
      if (b < bmin) {
        bmin = b;
        best_bic = i;
      }
    }
    REQUIRE(best_vic == best_bic);
  }
}

TEST_CASE("property: vic increases with the evaluator total and falls with parameters") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 149.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double t = u(rng);
    REQUIRE(vic(10.0, t + 1.0, 50.0) > vic(10.0, t, 50.0));
    const int n = 2 + trial % 100;
    REQUIRE(vic(bic(-5.0, 4, n), t, 50.0) < vic(bic(-5.0, 3, n), t, 50.0));
  }
}
