#pragma once

#include <functional>
#include <string>
#include <vector>

namespace modeldisc {

struct BoxBounds {
  std::vector<double> lower;
  std::vector<double> upper;
};

struct OptimizerOptions {
  int max_iterations = 200;
  /// Stop when |f_k - f_{k+1}| <= ftol * max(|f_k|, |f_{k+1}|, 1).
  double ftol = 1e-7;
  /// Stop when the projected gradient's infinity norm falls below this.
  double pgtol = 1e-5;
  int memory = 10;
};

struct OptimizerResult {
  std::vector<double> x;
  double f = 0.0;
  std::vector<double> gradient;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// Objective returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

/// Limited-memory BFGS with box constraints: variables at an active bound are
/// frozen for the quasi-Newton step, and the line search backtracks along the
/// projected path. Exceptions thrown by the objective propagate.
OptimizerResult minimize_box(const Objective& objective, std::vector<double> x0,
                             const BoxBounds& bounds, const OptimizerOptions& options = {});

/// Infinity norm of P(x - g) - x.
double projected_gradient_norm(const std::vector<double>& x, const std::vector<double>& g,
                               const BoxBounds& bounds);

}  // namespace modeldisc
