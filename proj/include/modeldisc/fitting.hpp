#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modeldisc/dataset.hpp"
#include "modeldisc/gp_core.hpp"
#include "modeldisc/kernel_dsl.hpp"
#include "modeldisc/optimizer.hpp"

namespace modeldisc {

/// Suggested starting values keyed by (leaf path text, parameter name), in
/// natural units of the normalized data (e.g. a period as a fraction of the
/// x extent).
struct InitSuggestion {
  std::map<std::pair<std::string, std::string>, double> values;

  bool empty() const { return values.empty(); }
  void set(const NodePath& leaf, const std::string& param, double value) {
    values[{path_text(leaf), param}] = value;
  }
};

/// Builds a suggestion from labels such as "PER.period" or "SE#2.lengthscale".
/// Labels absent from the schema are dropped and reported in `warnings`.
InitSuggestion suggestion_from_labels(const ParamSchema& schema,
                                      const std::map<std::string, double>& by_label,
                                      std::vector<std::string>* warnings = nullptr);

/// Optimizer-space start point with the suggested coordinates overwritten and
/// clamped into bounds. Suggestions naming unknown coordinates are ignored.
ParamVector apply_suggestion(const ParamSchema& schema, ParamVector start,
                             const InitSuggestion& suggestion);

struct RestartDiagnostics {
  std::string stage;  // "random" or "suggested"
  std::uint64_t seed = 0;
  bool failed = false;
  bool converged = false;
  double train_loglik = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  std::string message;
};

struct FittedModel {
  KernelExpr expr = KernelExpr::leaf(BaseKind::WN);
  ParamVector params;
  double train_loglik = 0.0;
  int round_created = 0;
  std::string provenance;
  /// Whether the returned parameters have projected gradient norm <= 1e-3.
  bool converged = false;
  std::vector<RestartDiagnostics> restarts;

  std::string kernel_text() const { return canonical_text(expr); }
};

struct FitOptions {
  OptimizerOptions optimizer;
  /// Threshold on the optimizer-space projected gradient for `converged`.
  double convergence_gradient = 1e-3;
};

inline constexpr double kInitNoiseLower = 1e-4;
inline constexpr double kInitNoiseUpper = 1.0;

ParamVector random_init(const KernelExpr& expr, std::uint64_t seed);

/// Seed of the i-th restart in the stream rooted at `seed`.
std::uint64_t restart_seed(std::uint64_t seed, std::size_t index);

/// Maximum-likelihood fit on the train partition. Stage one runs `n_restarts`
/// bounded local optimizations from random starts; stage two, when a
/// suggestion is present, restarts from the stage-one optimum with the
/// suggested coordinates overwritten and is kept only if it does not lower the
/// log-likelihood. Throws FitError when every run fails.
FittedModel fit(const KernelExpr& expr, const Dataset& dataset, int n_restarts,
                const std::optional<InitSuggestion>& suggestion, std::uint64_t seed,
                const FitOptions& options = {});

FittedModel fit_xy(const KernelExpr& expr, std::span<const double> x, std::span<const double> y,
                   int n_restarts, const std::optional<InitSuggestion>& suggestion,
                   std::uint64_t seed, const FitOptions& options = {});

/// Copies fitted values of parent leaves onto child leaves of the same kind,
/// matching greedily in canonical order.
InitSuggestion inherit_init(const FittedModel& parent, const KernelExpr& child_expr);

/// Union of two suggestions; entries of `preferred` win.
InitSuggestion merge_suggestions(const InitSuggestion& base, const InitSuggestion& preferred);

BoxBounds optimizer_bounds(const ParamSchema& schema);

}  // namespace modeldisc
