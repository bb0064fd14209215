#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "modeldisc/errors.hpp"
#include "modeldisc/evaluator.hpp"
#include "modeldisc/prompts.hpp"
#include "test_util.hpp"

using namespace modeldisc;

namespace {

double wave(double x) { return std::sin(2.0 * std::numbers::pi * x / 0.25); }

/// View of a model whose mean is `mean_fn` with band half-widths `center` in
/// the training region and `edge` beyond it.
PredictionView synthetic_view(const std::function<double(double)>& mean_fn, double center, double edge,
                              double resid_scale = 0.0) {
  PredictionView v;
  v.grid_x = extrapolation_grid(0.0, 1.0, 300);
  for (double x : v.grid_x) {
    const double h = (x < 0.0 || x > 1.0) ? edge : center;
    v.mean.push_back(mean_fn(x));
    v.low.push_back(v.mean.back() - h);
    v.high.push_back(v.mean.back() + h);
  }
  for (int i = 0; i < 100; ++i) {
    const double x = i / 99.0;
    v.train_x.push_back(x);
    v.train_y.push_back(wave(x));
    v.train_mean.push_back(mean_fn(x) + resid_scale * ((i % 2) ? 1.0 : -1.0));
  }
  return v;
}

}  // namespace

TEST_CASE("a perfect interpolant with preserved edges scores near the maximum") {
  const auto r = heuristic_evaluate(synthetic_view(wave, 1e-4, 1e-4));
  CHECK(r.fitness_mean_resemblance == doctest::Approx(50.0));
  CHECK(r.total() >= 145.0);
  CHECK(r.backend == EvaluatorBackendKind::Heuristic);
}

TEST_CASE("a flat mean through a unit sine loses the resemblance points") {
  const auto r = heuristic_evaluate(synthetic_view([](double) { return 0.0; }, 0.1, 0.1));
  // RMSE of a zero predictor equals the population sd of a zero-mean sine
  CHECK(r.fitness_mean_resemblance <= 10.0);
  CHECK(r.generalizability <= 1e-9);
  CHECK(r.total() <= 60.0);
}

TEST_CASE("five-fold band widening at the edges is penalized") {
  const auto r = heuristic_evaluate(synthetic_view(wave, 0.1, 0.5));
  CHECK(r.fitness_uncertainty < 30.0);
  CHECK(r.generalizability < 30.0);
}

TEST_CASE("components stay in range and without a band the band terms vanish") {
  auto v = synthetic_view(wave, 0.0, 0.0);
  v.has_band = false;
  const auto r = heuristic_evaluate(v);
  CHECK(r.fitness_uncertainty == 0.0);
  // only the edge-flatness term remains, as for a band of constant width
  CHECK(r.generalizability == doctest::Approx(heuristic_evaluate(synthetic_view(wave, 0.1, 0.1)).generalizability));
}

TEST_CASE("property: heuristic components are clamped and monotone") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double c = 0.01 + u(rng);
    const double e = c * (1.0 + 4.0 * u(rng));
    const double s = 0.5 * u(rng);
    const auto base = heuristic_evaluate(synthetic_view(wave, c, e, s));
    for (double comp : {base.fitness_mean_resemblance, base.fitness_uncertainty, base.generalizability}) {
      REQUIRE(comp >= 0.0);
      REQUIRE(comp <= 50.0);
    }
    const auto better_fit = heuristic_evaluate(synthetic_view(wave, c, e, s * 0.5));
    REQUIRE(better_fit.fitness_mean_resemblance >= base.fitness_mean_resemblance);
    const auto wider_edges = heuristic_evaluate(synthetic_view(wave, c, e * 1.5, s));
    REQUIRE(wider_edges.generalizability <= base.generalizability);
  }
}

TEST_CASE("heuristic reports are deterministic") {
  const auto v = synthetic_view(wave, 0.2, 0.3, 0.1);
  const auto a = heuristic_evaluate(v);
  const auto b = heuristic_evaluate(v);
  CHECK(a.total() == b.total());
}

TEST_CASE("prompts attach two images for resemblance and one otherwise") {
  testutil::TempDir dir;
  const auto plots = render_evaluation_plots(synthetic_view(wave, 0.1, 0.2), "c", dir.path());
  const auto bundles = build_prompts("LIN + PER", plots, default_prompts_dir());
  REQUIRE(bundles.size() == 3);
  CHECK(bundles[0].component == "resemblance");
  std::size_t images = 0;
  for (const auto& m : bundles[0].messages) images += m.images.size();
  CHECK(images == 2);
  for (int i : {1, 2}) {
    images = 0;
    std::string text;
    for (const auto& m : bundles[i].messages) {
      images += m.images.size();
      text += m.text;
    }
    CHECK(images == 1);
    CHECK(text.find("kernel1") != std::string::npos);
  }
  std::string unc;
  for (const auto& m : bundles[1].messages) unc += m.text;
  CHECK(unc.find("0") != std::string::npos);
  CHECK(unc.find("50") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "c_prediction.png"));
  CHECK_THROWS_AS(build_prompts("SE", plots, dir / "nowhere"), ConfigError);
}

TEST_CASE("vlm scores are averaged over repeats") {
  // order: resemblance x2, uncertainty x2, generalizability x2
  ScriptedBackend backend({"{\"kernel1\": 40}", "{\"kernel1\": 44}", "{'kernel1': 10}", "{'kernel1': 20}",
                           "sure: {\"kernel1\": 61}", "{\"kernel1\": 49}"});
  EvaluateOptions opt;
  opt.n_repeats = 2;
  const auto r = evaluate_view(synthetic_view(wave, 0.1, 0.1), "PER", backend, opt);
  CHECK(r.fitness_mean_resemblance == 42.0);
  CHECK(r.fitness_uncertainty == 15.0);
  CHECK(r.generalizability == 49.5);  // 61 clamps to 50
  CHECK(r.raw_replies.size() == 6);
  CHECK(r.backend == EvaluatorBackendKind::Vlm);
  CHECK(backend.calls() == 6);
}

TEST_CASE("unparseable or failing backends raise EvaluationError") {
  ScriptedBackend garbage({"I like it", "I like it"});
  EvaluateOptions opt;
  opt.n_repeats = 1;
  CHECK_THROWS_AS(evaluate_view(synthetic_view(wave, 0.1, 0.1), "PER", garbage, opt), EvaluationError);
  ScriptedBackend failing([](std::span<const ChatMessage>, double) -> std::string {
    throw TransportError("down");
  });
  CHECK_THROWS_AS(evaluate_view(synthetic_view(wave, 0.1, 0.1), "PER", failing, opt), EvaluationError);
}

TEST_CASE("the symbolic-regression prompt set skips the uncertainty query") {
  ScriptedBackend backend({"{\"function1\": 30}", "{\"function1\": 20}"});
  EvaluateOptions opt;
  opt.n_repeats = 1;
  opt.prompt_set = sr_prompt_set();
  auto v = synthetic_view(wave, 0.0, 0.0);
  v.has_band = false;
  const auto r = evaluate_view(v, "c0*sin(c1*x)", backend, opt);
  CHECK(r.fitness_mean_resemblance == 30.0);
  CHECK(r.fitness_uncertainty == 0.0);
  CHECK(r.generalizability == 20.0);
}

TEST_CASE("selection-time views never include test data") {
  std::vector<double> x(40), y(40);
  for (int i = 0; i < 40; ++i) {
    x[i] = i;
    y[i] = std::sin(i * 0.4);
  }
  const auto ds = standardize_and_split(make_series(x, y), 0.2, 0.0);
  const auto m = fit(parse_kernel("SE"), ds, 1, std::nullopt, 1);
  CHECK(make_prediction_view(m, ds).test_x.empty());
  CHECK(make_prediction_view(m, ds, 50, true).test_x.size() == 8);
  const auto r = evaluate(m, ds, nullptr, {});
  CHECK(r.total() == heuristic_evaluate(m, ds).total());
}
