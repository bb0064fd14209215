#include "modeldisc/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <spdlog/spdlog.h>

#include "modeldisc/errors.hpp"

namespace modeldisc {
namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct RunOutcome {
  ParamVector params;
  double loglik = -std::numeric_limits<double>::infinity();
  RestartDiagnostics diag;
};

RunOutcome run_local(const KernelExpr& expr, std::span<const double> x, std::span<const double> y,
                     const BoxBounds& bounds, ParamVector start, const FitOptions& options,
                     std::string stage, std::uint64_t seed) {
  RunOutcome out;
  out.diag.stage = std::move(stage);
  out.diag.seed = seed;
  auto objective = [&](const std::vector<double>& v, std::vector<double>& grad) {
    auto r = nll_and_gradient(expr, ParamVector{v}, x, y);
    grad = std::move(r.gradient);
    return r.nll;
  };
  try {
    auto res = minimize_box(objective, std::move(start.values), bounds, options.optimizer);
    out.params.values = std::move(res.x);
    out.loglik = -res.f;
    out.diag.train_loglik = out.loglik;
    out.diag.gradient_norm = res.projected_gradient_norm;
    out.diag.converged = res.projected_gradient_norm <= options.convergence_gradient;
    out.diag.iterations = res.iterations;
    out.diag.message = res.message;
    if (!std::isfinite(out.loglik)) {
      out.diag.failed = true;
      out.diag.message = "non-finite log-likelihood";
    }
  } catch (const NumericalError& e) {
    out.diag.failed = true;
    out.diag.message = e.what();
  }
  return out;
}

}  // namespace

std::uint64_t restart_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1));
}

BoxBounds optimizer_bounds(const ParamSchema& schema) {
  BoxBounds b;
  for (const auto& p : schema.params) {
    b.lower.push_back(p.lower_opt());
    b.upper.push_back(p.upper_opt());
  }
  b.lower.push_back(std::log(kNoiseLower));
  b.upper.push_back(std::log(kNoiseUpper));
  return b;
}

ParamVector random_init(const KernelExpr& expr, std::uint64_t seed) {
  const auto schema = param_schema(expr);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ParamVector pv;
  pv.values.reserve(schema.k_kernel() + 1);
  for (const auto& p : schema.params) {
    const double lo = p.lower_opt();
    const double hi = p.upper_opt();
    pv.values.push_back(lo + (hi - lo) * unit(rng));
  }
  const double lo = std::log(kInitNoiseLower);
  const double hi = std::log(kInitNoiseUpper);
  pv.values.push_back(lo + (hi - lo) * unit(rng));
  return pv;
}

InitSuggestion suggestion_from_labels(const ParamSchema& schema,
                                      const std::map<std::string, double>& by_label,
                                      std::vector<std::string>* warnings) {
  InitSuggestion s;
  for (const auto& [label, value] : by_label) {
    auto idx = schema.find(label);
    if (!idx || !std::isfinite(value)) {
      if (warnings) warnings->push_back("dropped init suggestion '" + label + "'");
      continue;
    }
    const auto& p = schema.params[*idx];
    s.set(p.leaf_path, p.name, value);
  }
  return s;
}

ParamVector apply_suggestion(const ParamSchema& schema, ParamVector start,
                             const InitSuggestion& suggestion) {
  for (std::size_t i = 0; i < schema.params.size(); ++i) {
    const auto& p = schema.params[i];
    auto it = suggestion.values.find({path_text(p.leaf_path), p.name});
    if (it == suggestion.values.end()) continue;
    double natural = std::clamp(it->second, p.lower, p.upper);
    start.values[i] = p.to_opt(natural);
  }
  return start;
}

FittedModel fit_xy(const KernelExpr& expr_in, std::span<const double> x, std::span<const double> y,
                   int n_restarts, const std::optional<InitSuggestion>& suggestion,
                   std::uint64_t seed, const FitOptions& options) {
  if (n_restarts < 1) throw FitError("n_restarts must be at least 1");
  const auto expr = canonicalize(expr_in);
  const auto schema = param_schema(expr);
  const auto bounds = optimizer_bounds(schema);

  FittedModel model;
  model.expr = expr;
  std::optional<RunOutcome> best;

  for (int i = 0; i < n_restarts; ++i) {
    const auto s = restart_seed(seed, static_cast<std::size_t>(i));
    auto out = run_local(expr, x, y, bounds, random_init(expr, s), options, "random", s);
    model.restarts.push_back(out.diag);
    if (!out.diag.failed && (!best || out.loglik > best->loglik)) best = std::move(out);
  }

  if (best && suggestion && !suggestion->empty()) {
    auto start = apply_suggestion(schema, best->params, *suggestion);
    auto out = run_local(expr, x, y, bounds, std::move(start), options, "suggested", seed);
    model.restarts.push_back(out.diag);
    if (!out.diag.failed && out.loglik >= best->loglik) best = std::move(out);
  }

  if (!best) {
    std::vector<std::string> diag;
    for (const auto& r : model.restarts) diag.push_back(r.stage + " " + std::to_string(r.seed) + ": " + r.message);
    throw FitError("all restarts failed for " + canonical_text(expr), std::move(diag));
  }
  model.params = std::move(best->params);
  model.train_loglik = best->loglik;
  model.converged = best->diag.converged;
  if (!model.converged) {
    spdlog::debug("fit of {} not converged (gradient norm {:.3g})", canonical_text(expr),
                  best->diag.gradient_norm);
  }
  return model;
}

FittedModel fit(const KernelExpr& expr, const Dataset& dataset, int n_restarts,
                const std::optional<InitSuggestion>& suggestion, std::uint64_t seed,
                const FitOptions& options) {
  const auto x = dataset.train_x();
  const auto y = dataset.train_y();
  return fit_xy(expr, x, y, n_restarts, suggestion, seed, options);
}

InitSuggestion inherit_init(const FittedModel& parent, const KernelExpr& child_expr) {
  const auto parent_leaves = leaves(parent.expr);
  const auto parent_schema = param_schema(parent.expr);
  const auto child = canonicalize(child_expr);
  std::vector<bool> used(parent_leaves.size(), false);

  InitSuggestion s;
  for (const auto& cl : leaves(child)) {
    for (std::size_t pi = 0; pi < parent_leaves.size(); ++pi) {
      if (used[pi] || parent_leaves[pi].kind != cl.kind) continue;
      used[pi] = true;
      for (std::size_t k = 0; k < parent_schema.params.size(); ++k) {
        const auto& p = parent_schema.params[k];
        if (p.leaf_index != pi) continue;
        s.set(cl.path, p.name, p.to_natural(parent.params.values.at(k)));
      }
      break;
    }
  }
  return s;
}

InitSuggestion merge_suggestions(const InitSuggestion& base, const InitSuggestion& preferred) {
  InitSuggestion out = base;
  for (const auto& [k, v] : preferred.values) out.values[k] = v;
  return out;
}

}  // namespace modeldisc
