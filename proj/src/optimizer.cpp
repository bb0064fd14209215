#include "modeldisc/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "modeldisc/errors.hpp"

namespace modeldisc {
namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void clamp_into(std::vector<double>& x, const BoxBounds& b) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], b.lower[i], b.upper[i]);
}

struct Pair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

}  // namespace

double projected_gradient_norm(const std::vector<double>& x, const std::vector<double>& g,
                               const BoxBounds& bounds) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = std::clamp(x[i] - g[i], bounds.lower[i], bounds.upper[i]);
    m = std::max(m, std::abs(p - x[i]));
  }
  return m;
}

OptimizerResult minimize_box(const Objective& objective, std::vector<double> x0,
                             const BoxBounds& bounds, const OptimizerOptions& options) {
  const std::size_t n = x0.size();
  if (bounds.lower.size() != n || bounds.upper.size() != n) {
    throw Error("bounds do not match the parameter dimension");
  }
  OptimizerResult res;
  res.x = std::move(x0);
  clamp_into(res.x, bounds);
  res.gradient.assign(n, 0.0);
  res.f = objective(res.x, res.gradient);
  res.evaluations = 1;
  if (!std::isfinite(res.f)) throw NumericalError("objective is not finite at the start point");

  std::deque<Pair> history;
  std::vector<double> grad_trial(n), x_trial(n), q(n), d(n);
  std::vector<char> free_var(n);

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    res.projected_gradient_norm = projected_gradient_norm(res.x, res.gradient, bounds);
    if (res.projected_gradient_norm <= options.pgtol) {
      res.converged = true;
      res.message = "projected gradient below tolerance";
      return res;
    }

    for (std::size_t i = 0; i < n; ++i) {
      const bool at_lower = res.x[i] <= bounds.lower[i] && res.gradient[i] > 0.0;
      const bool at_upper = res.x[i] >= bounds.upper[i] && res.gradient[i] < 0.0;
      free_var[i] = !(at_lower || at_upper);
      q[i] = free_var[i] ? res.gradient[i] : 0.0;
    }

    // Two-loop recursion restricted to the free variables.
    std::vector<double> alpha(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
      const auto& h = history[k];
      double a = 0.0;
      for (std::size_t i = 0; i < n; ++i) if (free_var[i]) a += h.s[i] * q[i];
      a *= h.rho;
      alpha[k] = a;
      for (std::size_t i = 0; i < n; ++i) if (free_var[i]) q[i] -= a * h.y[i];
    }
    double gamma = 1.0;
    if (!history.empty()) {
      const auto& h = history.back();
      gamma = dot(h.s, h.y) / dot(h.y, h.y);
    }
    for (std::size_t i = 0; i < n; ++i) q[i] *= gamma;
    for (std::size_t k = 0; k < history.size(); ++k) {
      const auto& h = history[k];
      double b = 0.0;
      for (std::size_t i = 0; i < n; ++i) if (free_var[i]) b += h.y[i] * q[i];
      b *= h.rho;
      for (std::size_t i = 0; i < n; ++i) if (free_var[i]) q[i] += h.s[i] * (alpha[k] - b);
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = free_var[i] ? -q[i] : 0.0;

    double slope = dot(res.gradient, d);
    if (!(slope < 0.0)) {
      history.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = free_var[i] ? -res.gradient[i] : 0.0;
      slope = dot(res.gradient, d);
    }

    double step = 1.0;
    if (history.empty()) {
      double dmax = 0.0;
      for (double v : d) dmax = std::max(dmax, std::abs(v));
      if (dmax > 1.0) step = 1.0 / dmax;
    }

    bool accepted = false;
    double f_trial = std::numeric_limits<double>::infinity();
    for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) x_trial[i] = res.x[i] + step * d[i];
      clamp_into(x_trial, bounds);
      double decrease = 0.0;
      bool moved = false;
      for (std::size_t i = 0; i < n; ++i) {
        decrease += res.gradient[i] * (x_trial[i] - res.x[i]);
        moved = moved || x_trial[i] != res.x[i];
      }
      if (!moved) break;
      try {
        f_trial = objective(x_trial, grad_trial);
      } catch (const NumericalError&) {
        f_trial = std::numeric_limits<double>::infinity();
      }
      ++res.evaluations;
      if (std::isfinite(f_trial) && f_trial <= res.f + 1e-4 * decrease) {
        accepted = true;
        break;
      }
    }

    if (!accepted) {
      if (!history.empty()) {
        history.clear();
        continue;
      }
      res.message = "line search failed";
      break;
    }

    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = x_trial[i] - res.x[i];
      p.y[i] = grad_trial[i] - res.gradient[i];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-10 * dot(p.y, p.y)) {
      p.rho = 1.0 / sy;
      history.push_back(std::move(p));
      if (static_cast<int>(history.size()) > options.memory) history.pop_front();
    }

    const double f_prev = res.f;
    res.x = x_trial;
    res.f = f_trial;
    res.gradient = grad_trial;
    if (std::abs(f_prev - f_trial) <=
        options.ftol * std::max({std::abs(f_prev), std::abs(f_trial), 1.0})) {
      ++res.iterations;
      res.converged = true;
      res.message = "objective change below tolerance";
      break;
    }
  }
  res.projected_gradient_norm = projected_gradient_norm(res.x, res.gradient, bounds);
  if (res.message.empty()) res.message = "iteration limit reached";
  return res;
}

}  // namespace modeldisc
