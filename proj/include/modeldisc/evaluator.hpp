#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "modeldisc/dataset.hpp"
#include "modeldisc/fitting.hpp"
#include "modeldisc/plotting.hpp"
#include "modeldisc/vlm_client.hpp"

namespace modeldisc {

enum class EvaluatorBackendKind { Vlm, Heuristic };

struct EvaluatorReport {
  double fitness_mean_resemblance = 0.0;  // [0, 50]
  double fitness_uncertainty = 0.0;       // [0, 50]
  double generalizability = 0.0;          // [0, 50]
  int n_repeats = 1;
  EvaluatorBackendKind backend = EvaluatorBackendKind::Heuristic;
  std::vector<std::string> raw_replies;
  std::vector<std::string> plot_files;

  double total() const { return fitness_mean_resemblance + fitness_uncertainty + generalizability; }
};

/// Everything the evaluator looks at, in normalized units. The grid covers the
/// train range plus 20% on each side; `train_mean` is the predictive mean at
/// the training abscissae. Without a band, low == high == mean. Test points
/// are only drawn when present; selection-time views leave them empty.
struct PredictionView {
  std::vector<double> grid_x;
  std::vector<double> mean;
  std::vector<double> low;
  std::vector<double> high;
  std::vector<double> train_x;
  std::vector<double> train_y;
  std::vector<double> train_mean;
  std::vector<double> test_x;
  std::vector<double> test_y;
  bool has_band = true;
};

PredictionView make_prediction_view(const FittedModel& model, const Dataset& dataset,
                                    int grid_points = kDefaultGridPoints, bool include_test = false);

/// Deterministic stand-in for the visual judge; see docs/config.md for the
/// formulas. Every component lies in [0, 50].
EvaluatorReport heuristic_evaluate(const PredictionView& view);
EvaluatorReport heuristic_evaluate(const FittedModel& model, const Dataset& dataset);

/// Prompt assets and reply key for one evaluation flavour. An empty
/// `uncertainty_asset` skips that query and reports 0 for the component.
struct EvaluatorPromptSet {
  std::string resemblance_asset = "evaluator_resemblance.txt";
  std::string uncertainty_asset = "evaluator_uncertainty.txt";
  std::string generalizability_asset = "evaluator_generalizability.txt";
  std::string reply_key = "kernel1";
};

EvaluatorPromptSet sr_prompt_set();

struct EvaluationPlots {
  RenderedPlot data;       // observations only
  RenderedPlot mean_only;  // predicted mean only
  RenderedPlot prediction; // mean, band, train and test data
};

/// Renders the three evaluator plots; files are written when `out_dir` is not
/// empty.
EvaluationPlots render_evaluation_plots(const PredictionView& view, const std::string& name,
                                        const std::filesystem::path& out_dir);

struct PromptBundle {
  std::string component;  // resemblance, uncertainty or generalizability
  std::vector<ChatMessage> messages;
};

/// One chat exchange per sub-score with the plots attached: two images for
/// resemblance, one for each of the others. Throws ConfigError if an asset is
/// missing.
std::vector<PromptBundle> build_prompts(const std::string& model_text, const EvaluationPlots& plots,
                                        const std::filesystem::path& prompts_dir,
                                        const EvaluatorPromptSet& set = {});

struct EvaluateOptions {
  int n_repeats = 2;
  int grid_points = kDefaultGridPoints;
  std::filesystem::path prompts_dir;  // empty: default_prompts_dir()
  std::filesystem::path plots_dir;    // empty: keep plots in memory
  std::string plot_name = "candidate";
  EvaluatorPromptSet prompt_set;
};

/// Queries every sub-score `n_repeats` times through `backend` and averages
/// the parsed values. Throws EvaluationError when the backend fails or a reply
/// cannot be parsed.
EvaluatorReport evaluate_view(const PredictionView& view, const std::string& model_text,
                              ChatBackend& backend, const EvaluateOptions& options);

/// `backend == nullptr` selects the heuristic evaluator.
EvaluatorReport evaluate(const FittedModel& model, const Dataset& dataset, ChatBackend* backend,
                         const EvaluateOptions& options = {});

}  // namespace modeldisc
