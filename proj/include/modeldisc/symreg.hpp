#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modeldisc/dataset.hpp"
#include "modeldisc/evaluator.hpp"
#include "modeldisc/run_config.hpp"
#include "modeldisc/search.hpp"
#include "modeldisc/vlm_client.hpp"

namespace modeldisc {

/// Expression tree over x, numeric literals and coefficients c0, c1, ...
/// Operators: + - * / and ^ with an integer literal exponent; functions sin,
/// cos, tan, sinh, cosh, sqrt, exp, log, abs. log and sqrt act on |u| (log
/// adds 1e-12) so every real input is in their domain.
class FuncExpr {
 public:
  enum class Op { Num, X, Coef, Neg, Add, Sub, Mul, Div, Pow, Call };

  static FuncExpr num(double v);
  static FuncExpr x();
  static FuncExpr coef(std::size_t index);
  static FuncExpr unary(Op op, FuncExpr a);
  static FuncExpr binary(Op op, FuncExpr a, FuncExpr b);
  static FuncExpr power(FuncExpr base, int exponent);
  static FuncExpr call(std::string fn, FuncExpr arg);

  Op op() const { return op_; }
  double value() const { return value_; }
  std::size_t index() const { return index_; }
  int exponent() const { return exponent_; }
  const std::string& fn() const { return fn_; }
  const std::vector<FuncExpr>& children() const { return children_; }

 private:
  Op op_ = Op::Num;
  double value_ = 0.0;
  std::size_t index_ = 0;
  int exponent_ = 1;
  std::string fn_;
  std::vector<FuncExpr> children_;
};

/// Throws ParseError with the offending position. Coefficients must be
/// numbered c0..c{k-1} without gaps.
FuncExpr parse_function(std::string_view text);

/// Fully parenthesis-minimal text that parses back to the same tree.
std::string function_text(const FuncExpr& e);

std::size_t node_count(const FuncExpr& e);
std::size_t coefficient_count(const FuncExpr& e);

double eval_function(const FuncExpr& e, double x, std::span<const double> coefs);
std::vector<double> eval_function(const FuncExpr& e, std::span<const double> x,
                                  std::span<const double> coefs);

struct FittedFunction {
  FuncExpr expr = FuncExpr::num(0.0);
  std::vector<double> coefs;
  double rss = 0.0;
  int round_created = 0;
  std::string provenance;
  std::string text() const { return function_text(expr); }
};

/// Nonlinear least squares from `n_restarts` uniform [-2, 2] starts; keeps the
/// lowest residual sum of squares. Throws FitError when there are fewer points
/// than coefficients or every restart ends non-finite.
FittedFunction fit_function(const FuncExpr& expr, std::span<const double> x, std::span<const double> y,
                            int n_restarts, std::uint64_t seed);

/// Fits on the training partition in original units.
FittedFunction fit_function(const FuncExpr& expr, const Dataset& dataset, int n_restarts,
                            std::uint64_t seed);

inline constexpr double kDefaultLambdaC = 1e-3;
inline constexpr double kDefaultAlphaSr = 0.05;

struct SrScore {
  double nmse = 0.0;
  std::size_t complexity = 0;
  double objective = 0.0;
  double evaluator_total = 0.0;
  double combined = 0.0;
  bool finite = true;
};

/// Mean squared error over the population variance of `y`. Throws Error for
/// zero-variance targets.
double nmse(std::span<const double> prediction, std::span<const double> y);

/// nmse on the training partition (original units), objective = nmse +
/// lambda_c * node_count, combined = alpha_sr * evaluator_total - objective.
SrScore sr_objective(const FittedFunction& fitted, const Dataset& dataset, double lambda_c,
                     double evaluator_total = 0.0, double alpha_sr = kDefaultAlphaSr);

/// Evaluator view of a fitted function in normalized units (no band).
PredictionView function_view(const FittedFunction& fitted, const Dataset& dataset,
                             int grid_points = kDefaultGridPoints, bool include_test = false);

/// Deterministic proposals built by appending basis terms to `best` (or a
/// starter set when `best` is null).
std::vector<std::string> sr_greedy_propose(const FittedFunction* best, std::size_t count);

struct SrEntry {
  FittedFunction fitted;
  SrScore score;
  EvaluatorReport report;
  bool evaluation_failed = false;
  std::vector<std::string> plot_files;
  std::string transcript_ref;
};

struct SrResult {
  SrEntry best;
  std::vector<SrEntry> pool;
  std::vector<RmsePoint> rmse_series;
};

/// Discovery loop with functions in place of kernels; selection maximizes the
/// combined score among finite candidates. Writes the same run layout as
/// run_discovery.
SrResult run_sr_discovery(const RunConfig& config, const Dataset& dataset,
                          const std::filesystem::path& run_dir, ChatBackend* backend = nullptr);

}  // namespace modeldisc
