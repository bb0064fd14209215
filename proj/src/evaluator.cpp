#include "modeldisc/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "modeldisc/errors.hpp"
#include "modeldisc/gp_core.hpp"
#include "modeldisc/prompts.hpp"

namespace modeldisc {
namespace {

constexpr double kSlopeEps = 1e-8;
// Band widths below this fraction of the data range count as this fraction,
// so ratios of numerically-zero widths stay finite and stable.
constexpr double kWidthFloor = 1e-3;
constexpr double kEdgeFraction = 0.2;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_sd(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return v.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(v.size()));
}

struct Window {
  std::size_t begin;
  std::size_t end;  // exclusive
};

double mean_width(const PredictionView& v, Window w) {
  double s = 0.0;
  for (std::size_t i = w.begin; i < w.end; ++i) s += v.high[i] - v.low[i];
  return s / static_cast<double>(w.end - w.begin);
}

double mean_abs_slope(const PredictionView& v, Window w) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = w.begin + 1; i < w.end; ++i) {
    const double dx = v.grid_x[i] - v.grid_x[i - 1];
    if (dx <= 0.0) continue;
    s += std::abs((v.mean[i] - v.mean[i - 1]) / dx);
    ++n;
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

void check_view(const PredictionView& v) {
  const auto n = v.grid_x.size();
  if (n < 10 || v.mean.size() != n || v.low.size() != n || v.high.size() != n) {
    throw Error("prediction view needs >= 10 aligned grid points");
  }
  if (v.train_x.size() != v.train_y.size() || v.train_mean.size() != v.train_y.size() ||
      v.train_y.empty()) {
    throw Error("prediction view has misaligned training series");
  }
}

}  // namespace

PredictionView make_prediction_view(const FittedModel& model, const Dataset& dataset,
                                    int grid_points, bool include_test) {
  const auto tx = dataset.train_x();
  const auto ty = dataset.train_y();
  const auto [lo, hi] = std::minmax_element(tx.begin(), tx.end());
  PredictionView v;
  v.grid_x = extrapolation_grid(*lo, *hi, grid_points);
  const auto post = posterior_predict(model.expr, model.params, tx, ty, v.grid_x);
  v.mean = post.mean;
  v.low = post.low_q;
  v.high = post.high_q;
  v.train_x = tx;
  v.train_y = ty;
  v.train_mean = posterior_predict(model.expr, model.params, tx, ty, tx).mean;
  if (include_test) {
    v.test_x = dataset.test_x();
    v.test_y = dataset.test_y();
  }
  return v;
}

EvaluatorReport heuristic_evaluate(const PredictionView& view) {
  check_view(view);
  const auto n = view.grid_x.size();
  const auto edge = std::max<std::size_t>(2, static_cast<std::size_t>(kEdgeFraction * n));
  const Window left{0, edge};
  const Window right{n - edge, n};
  const Window center{edge, n - edge};

  const auto [ymin, ymax] = std::minmax_element(view.train_y.begin(), view.train_y.end());
  const double range = *ymax - *ymin > 0.0 ? *ymax - *ymin : 1.0;

  double sse = 0.0;
  for (std::size_t i = 0; i < view.train_y.size(); ++i) {
    const double r = view.train_y[i] - view.train_mean[i];
    sse += r * r;
  }
  const double rmse = std::sqrt(sse / static_cast<double>(view.train_y.size()));
  const double sd = population_sd(view.train_y);
  const double resemblance = sd > 0.0 ? 50.0 * clamp01(1.0 - rmse / sd) : (rmse == 0.0 ? 50.0 : 0.0);

  double uncertainty = 0.0;
  double blowup = 0.0;
  if (view.has_band) {
    const double floor = kWidthFloor * range;
    const double w_all = mean_width(view, {0, n});
    const double w_center = std::max(mean_width(view, center), floor);
    const double w_edge = std::max({mean_width(view, left), mean_width(view, right), floor});
    const double ratio = w_edge / w_center;
    uncertainty = std::clamp(50.0 * clamp01(1.0 - w_all / range) - 20.0 * clamp01(ratio - 1.0), 0.0, 50.0);
    blowup = 0.5 * clamp01(ratio - 2.0);
  }

  const double slope_center = mean_abs_slope(view, center);
  double flatness = 0.0;
  for (const auto& side : {left, right}) {
    flatness += 0.5 * clamp01(1.0 - mean_abs_slope(view, side) / (slope_center + kSlopeEps));
  }
  const double generalizability = 50.0 * clamp01(1.0 - flatness - blowup);

  EvaluatorReport r;
  r.fitness_mean_resemblance = resemblance;
  r.fitness_uncertainty = uncertainty;
  r.generalizability = generalizability;
  r.n_repeats = 1;
  r.backend = EvaluatorBackendKind::Heuristic;
  return r;
}

EvaluatorReport heuristic_evaluate(const FittedModel& model, const Dataset& dataset) {
  return heuristic_evaluate(make_prediction_view(model, dataset));
}

EvaluatorPromptSet sr_prompt_set() {
  EvaluatorPromptSet s;
  s.resemblance_asset = "sr_evaluator_fitness.txt";
  s.uncertainty_asset.clear();
  s.generalizability_asset = "sr_evaluator_generalizability.txt";
  s.reply_key = "function1";
  return s;
}

EvaluationPlots render_evaluation_plots(const PredictionView& view, const std::string& name,
                                        const std::filesystem::path& out_dir) {
  auto emit = [&](PlotSpec spec) {
    if (out_dir.empty()) {
      RenderedPlot p;
      p.image_bytes = render_png(spec);
      p.spec_digest = spec_digest(spec);
      return p;
    }
    return render(spec, out_dir);
  };

  PlotSpec data;
  data.kind = PlotKind::Data;
  data.name = name;
  data.title = "data";
  data.series["x"] = view.train_x;
  data.series["y"] = view.train_y;

  PlotSpec mean_only;
  mean_only.kind = PlotKind::Data;
  mean_only.name = name + "_mean";
  mean_only.title = "predicted mean";
  mean_only.line_role = LineRole::Mean;
  mean_only.series["x"] = view.grid_x;
  mean_only.series["y"] = view.mean;

  PlotSpec pred;
  pred.kind = PlotKind::Prediction;
  pred.name = name;
  pred.title = "prediction";
  pred.series["x"] = view.grid_x;
  pred.series["mean"] = view.mean;
  pred.series["low"] = view.low;
  pred.series["high"] = view.high;
  pred.series["train_x"] = view.train_x;
  pred.series["train_y"] = view.train_y;
  if (!view.test_x.empty()) {
    pred.series["test_x"] = view.test_x;
    pred.series["test_y"] = view.test_y;
  }
  return EvaluationPlots{emit(data), emit(mean_only), emit(pred)};
}

std::vector<PromptBundle> build_prompts(const std::string& model_text, const EvaluationPlots& plots,
                                        const std::filesystem::path& prompts_dir,
                                        const EvaluatorPromptSet& set) {
  const std::map<std::string, std::string> vars{{"model_key", set.reply_key},
                                                {"kernel_text", model_text}};
  std::vector<PromptBundle> out;
  {
    ChatMessage m;
    m.text = load_prompt(prompts_dir, set.resemblance_asset, vars);
    m.images = {plots.data.image_bytes, plots.mean_only.image_bytes};
    out.push_back({"resemblance", {m}});
  }
  if (!set.uncertainty_asset.empty()) {
    ChatMessage m;
    m.text = load_prompt(prompts_dir, set.uncertainty_asset, vars);
    m.images = {plots.prediction.image_bytes};
    out.push_back({"uncertainty", {m}});
  }
  {
    ChatMessage m;
    m.text = load_prompt(prompts_dir, set.generalizability_asset, vars);
    m.images = {plots.prediction.image_bytes};
    out.push_back({"generalizability", {m}});
  }
  return out;
}

EvaluatorReport evaluate_view(const PredictionView& view, const std::string& model_text,
                              ChatBackend& backend, const EvaluateOptions& options) {
  if (options.n_repeats < 1) throw Error("n_repeats must be >= 1");
  check_view(view);
  const auto prompts_dir = options.prompts_dir.empty() ? default_prompts_dir() : options.prompts_dir;
  const auto plots = render_evaluation_plots(view, options.plot_name, options.plots_dir);
  const auto bundles = build_prompts(model_text, plots, prompts_dir, options.prompt_set);

  EvaluatorReport r;
  r.backend = EvaluatorBackendKind::Vlm;
  r.n_repeats = options.n_repeats;
  for (const auto* p : {&plots.data, &plots.mean_only, &plots.prediction}) {
    if (!p->path.empty()) r.plot_files.push_back(p->path.filename().string());
  }
  const std::vector<std::string> keys{options.prompt_set.reply_key};
  for (const auto& bundle : bundles) {
    double sum = 0.0;
    for (int rep = 0; rep < options.n_repeats; ++rep) {
      std::string reply;
      try {
        reply = backend.chat(bundle.messages, kEvaluatorTemperature);
      } catch (const Error& e) {
        throw EvaluationError(bundle.component + " query failed: " + e.what());
      }
      r.raw_replies.push_back(reply);
      try {
        sum += parse_score_mapping(reply, keys, 0.0, 50.0).values.at(keys.front());
      } catch (const ParseError& e) {
        throw EvaluationError(bundle.component + " reply unparseable: " + e.what());
      }
    }
    const double avg = sum / options.n_repeats;
    if (bundle.component == "resemblance") r.fitness_mean_resemblance = avg;
    else if (bundle.component == "uncertainty") r.fitness_uncertainty = avg;
    else r.generalizability = avg;
  }
  return r;
}

EvaluatorReport evaluate(const FittedModel& model, const Dataset& dataset, ChatBackend* backend,
                         const EvaluateOptions& options) {
  if (options.n_repeats < 1) throw Error("n_repeats must be >= 1");
  const auto view = make_prediction_view(model, dataset, options.grid_points);
  if (backend == nullptr) {
    auto r = heuristic_evaluate(view);
    if (!options.plots_dir.empty()) {
      const auto plots = render_evaluation_plots(view, options.plot_name, options.plots_dir);
      r.plot_files = {plots.data.path.filename().string(), plots.mean_only.path.filename().string(),
                      plots.prediction.path.filename().string()};
    }
    return r;
  }
  return evaluate_view(view, model.kernel_text(), *backend, options);
}

}  // namespace modeldisc
