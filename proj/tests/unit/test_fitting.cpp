#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "modeldisc/errors.hpp"
#include "modeldisc/fitting.hpp"
#include "modeldisc/optimizer.hpp"
#include "oracles.hpp"

using namespace modeldisc;

namespace {

double natural_param(const FittedModel& m, const std::string& label) {
  const auto schema = param_schema(m.expr);
  const auto i = schema.find(label);
  REQUIRE(i.has_value());
  return schema.params[*i].to_natural(m.params.values[*i]);
}

}  // namespace

// ---- optimizer ---------------------------------------------------------------

TEST_CASE("box-constrained minimization of a shifted quadratic") {
  const Objective f = [](const std::vector<double>& x, std::vector<double>& g) {
    g = {2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)};
    return (x[0] - 3.0) * (x[0] - 3.0) + (x[1] + 1.0) * (x[1] + 1.0);
  };
  const auto free = minimize_box(f, {0.0, 0.0}, {{-10.0, -10.0}, {10.0, 10.0}});
  CHECK(free.x[0] == doctest::Approx(3.0).epsilon(1e-5));
  CHECK(free.x[1] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(free.converged);
  // the unconstrained minimizer lies outside the box: the answer sits on the bound
  const auto boxed = minimize_box(f, {0.0, 0.0}, {{-10.0, 0.0}, {2.0, 10.0}});
  CHECK(boxed.x[0] == doctest::Approx(2.0));
  CHECK(boxed.x[1] == doctest::Approx(0.0));
  CHECK(boxed.projected_gradient_norm <= 1e-5);
}

TEST_CASE("Rosenbrock inside a box") {
  const Objective f = [](const std::vector<double>& x, std::vector<double>& g) {
    const double a = 1.0 - x[0];
    const double b = x[1] - x[0] * x[0];
    g = {-2.0 * a - 400.0 * x[0] * b, 200.0 * b};
    return a * a + 100.0 * b * b;
  };
  OptimizerOptions opt;
  opt.max_iterations = 2000;
  opt.ftol = 1e-14;
  const auto r = minimize_box(f, {-1.2, 1.0}, {{-2.0, -2.0}, {2.0, 2.0}}, opt);
  CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("projected gradient norm ignores gradients pushing outward at a bound") {
  const BoxBounds b{{0.0}, {1.0}};
  CHECK(projected_gradient_norm({0.0}, {5.0}, b) == 0.0);
  CHECK(projected_gradient_norm({0.5}, {0.25}, b) == doctest::Approx(0.25));
}

// ---- initialization ------------------------------------------------------------

TEST_CASE("random_init is deterministic and respects bounds") {
  const auto e = parse_kernel("LIN + PER + SE");
  CHECK(random_init(e, 5) == random_init(e, 5));
  CHECK_FALSE(random_init(e, 5) == random_init(e, 6));
  const auto schema = param_schema(parse_kernel("SE"));
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto p = random_init(parse_kernel("SE"), s);
    const double ell = schema.params[1].to_natural(p.values[1]);
    REQUIRE(ell >= 1e-4);
    REQUIRE(ell <= 1e2);
    REQUIRE(p.noise_variance() >= kInitNoiseLower * (1 - 1e-12));
    REQUIRE(p.noise_variance() <= kInitNoiseUpper * (1 + 1e-12));
    validate_params(schema, p);
  }
}

TEST_CASE("suggestions by label are clamped and unknown labels reported") {
  const auto e = parse_kernel("PER + SE");
  const auto schema = param_schema(e);
  std::vector<std::string> warnings;
  const auto s = suggestion_from_labels(schema, {{"PER.period", 50.0}, {"LIN.offset", 1.0}}, &warnings);
  CHECK(warnings.size() == 1);
  const auto p = apply_suggestion(schema, random_init(e, 1), s);
  const auto i = *schema.find("PER.period");
  CHECK(schema.params[i].to_natural(p.values[i]) == doctest::Approx(2.0));
}

TEST_CASE("inherit_init matches leaves by kind") {
  const std::vector<double> x{0.0, 0.25, 0.5, 0.75, 1.0};
  const std::vector<double> y{0.0, 1.0, 0.0, -1.0, 0.0};
  const auto parent = fit_xy(parse_kernel("SE"), x, y, 1, std::nullopt, 3);
  const auto child = parse_kernel("PER + SE");
  const auto s = inherit_init(parent, child);
  CHECK(s.values.size() == 2);  // SE variance and lengthscale only
  for (const auto& [key, v] : s.values) CHECK(key.second != "period");

  const auto lp = fit_xy(parse_kernel("LIN + PER"), x, y, 1, std::nullopt, 3);
  CHECK(inherit_init(lp, parse_kernel("LIN * PER")).values.size() == 5);
  CHECK(inherit_init(lp, parse_kernel("C * WN")).empty());
}

// ---- fit -----------------------------------------------------------------------

TEST_CASE("constant kernel recovers the sample variance") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(80), y(80);
  for (int i = 0; i < 80; ++i) {
    x[i] = i / 79.0;
    y[i] = g(rng);
  }
  double m = 0.0;
  for (double v : y) m += v;
  m /= 80.0;
  double var = 0.0;
  for (auto& v : y) {
    v = (v - m);
    var += v * v;
  }
  var /= 80.0;
  for (auto& v : y) v /= std::sqrt(var);  // mean 0, variance 1
  const auto fitted = fit_xy(parse_kernel("C"), x, y, 5, std::nullopt, 11);
  const double total = natural_param(fitted, "C.variance") + fitted.params.noise_variance();
  CHECK(total == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("periodic kernel recovers a clean period from a suggestion") {
  std::vector<double> x(60), y(60);
  for (int i = 0; i < 60; ++i) {
    x[i] = i / 59.0;
    y[i] = std::sin(2.0 * std::numbers::pi * x[i] / 0.25);
  }
  InitSuggestion s;
  const auto e = parse_kernel("PER");
  s.set(leaves(e)[0].path, "period", 0.25);
  const auto fitted = fit_xy(e, x, y, 3, s, 17);
  CHECK(natural_param(fitted, "PER.period") == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("fit is reproducible for a fixed seed") {
  const std::vector<double> x{0.0, 0.1, 0.3, 0.45, 0.6, 0.8, 1.0};
  const std::vector<double> y{0.2, 0.5, 0.1, -0.4, -0.2, 0.6, 0.9};
  const auto a = fit_xy(parse_kernel("SE + LIN"), x, y, 1, std::nullopt, 123);
  const auto b = fit_xy(parse_kernel("SE + LIN"), x, y, 1, std::nullopt, 123);
  CHECK(a.params == b.params);
  CHECK(a.train_loglik == b.train_loglik);
}

TEST_CASE("property: more restarts never lower the best log-likelihood") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 6; ++trial) {
    const auto e = canonicalize(oracle::random_kernel(rng, 2));
    const auto x = oracle::random_inputs(rng, 15);
    const auto y = oracle::random_targets(rng, 15);
    double prev = -std::numeric_limits<double>::infinity();
    for (int r = 1; r <= 3; ++r) {
      const auto m = fit_xy(e, x, y, r, std::nullopt, 1000 + trial);
      REQUIRE(m.train_loglik >= prev - 1e-9);
      prev = m.train_loglik;
      validate_params(param_schema(e), m.params);
    }
  }
}

TEST_CASE("property: a suggestion never worsens the stage-one optimum") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 6; ++trial) {
    const auto e = parse_kernel("PER + SE");
    const auto x = oracle::random_inputs(rng, 20);
    const auto y = oracle::random_targets(rng, 20);
    const auto base = fit_xy(e, x, y, 2, std::nullopt, 77);
    InitSuggestion s;
    s.set(leaves(e)[0].path, "period", std::uniform_real_distribution<double>(0.05, 1.0)(rng));
    const auto with = fit_xy(e, x, y, 2, s, 77);
    REQUIRE(with.train_loglik >= base.train_loglik - 1e-9);
  }
}

TEST_CASE("converged flag agrees with the gradient norm") {
  const std::vector<double> x{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  const std::vector<double> y{0.0, 0.6, 0.9, 0.7, 0.1, -0.5};
  const auto e = parse_kernel("SE");
  const auto m = fit_xy(e, x, y, 3, std::nullopt, 5);
  const auto g = nll_gradient(e, m.params, x, y);
  const auto bounds = optimizer_bounds(param_schema(e));
  const double pg = projected_gradient_norm(m.params.values, g, bounds);
  if (m.converged) CHECK(pg <= 1e-3 + 1e-9);
  else CHECK(pg > 1e-3);
}

TEST_CASE("fit on a dataset uses the train partition only") {
  std::vector<double> x(20), y(20);
  for (int i = 0; i < 20; ++i) {
    x[i] = i;
    y[i] = std::cos(i * 0.7) + 0.01 * i;
  }
  const auto ds = standardize_and_split(make_series(x, y), 0.2, 0.0);
  const auto a = fit(parse_kernel("SE"), ds, 2, std::nullopt, 9);
  const auto b = fit_xy(parse_kernel("SE"), ds.train_x(), ds.train_y(), 2, std::nullopt, 9);
  CHECK(a.train_loglik == b.train_loglik);
}

TEST_CASE("restart seeds form a reproducible stream") {
  CHECK(restart_seed(1, 0) == restart_seed(1, 0));
  CHECK(restart_seed(1, 0) != restart_seed(1, 1));
  CHECK(restart_seed(1, 0) != restart_seed(2, 0));
}
