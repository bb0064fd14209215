#include "modeldisc/gp_core.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "modeldisc/errors.hpp"

namespace modeldisc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kPi = std::numbers::pi;

// Walks leaves in schema order, consuming optimizer-space parameters.
struct ParamCursor {
  std::span<const double> values;
  std::size_t pos = 0;
  double take_log() { return std::exp(values[pos++]); }
  double take_linear() { return values[pos++]; }
};

double leaf_value(BaseKind kind, ParamCursor& cur, double x1, double x2) {
  switch (kind) {
    case BaseKind::SE: {
      const double var = cur.take_log();
      const double ell = cur.take_log();
      const double d = x1 - x2;
      return var * std::exp(-d * d / (2.0 * ell * ell));
    }
    case BaseKind::PER: {
      const double var = cur.take_log();
      const double ell = cur.take_log();
      const double p = cur.take_log();
      const double s = std::sin(kPi * std::abs(x1 - x2) / p);
      return var * std::exp(-2.0 * s * s / (ell * ell));
    }
    case BaseKind::LIN: {
      const double var = cur.take_log();
      const double c = cur.take_linear();
      return var * (x1 - c) * (x2 - c);
    }
    case BaseKind::C: return cur.take_log();
    case BaseKind::WN: {
      const double var = cur.take_log();
      return x1 == x2 ? var : 0.0;
    }
  }
  return 0.0;
}

double value_rec(const KernelExpr& e, ParamCursor& cur, double x1, double x2) {
  switch (e.op()) {
    case KernelExpr::Op::Leaf: return leaf_value(e.base(), cur, x1, x2);
    case KernelExpr::Op::Sum: {
      double s = 0.0;
      for (const auto& c : e.children()) s += value_rec(c, cur, x1, x2);
      return s;
    }
    case KernelExpr::Op::Product: {
      double p = 1.0;
      for (const auto& c : e.children()) p *= value_rec(c, cur, x1, x2);
      return p;
    }
  }
  return 0.0;
}

// Covariance block of a subtree plus derivatives w.r.t. the subtree's own
// optimizer-space parameters (a contiguous range of the schema).
struct Block {
  MatrixXd k;
  std::vector<MatrixXd> dk;
};

Block leaf_block(BaseKind kind, ParamCursor& cur, std::span<const double> a,
                 std::span<const double> b, bool with_grad) {
  const auto na = static_cast<Eigen::Index>(a.size());
  const auto nb = static_cast<Eigen::Index>(b.size());
  Block out;
  out.k.resize(na, nb);
  switch (kind) {
    case BaseKind::SE: {
      const double var = cur.take_log();
      const double ell = cur.take_log();
      MatrixXd d2(na, nb);
      for (Eigen::Index j = 0; j < nb; ++j) {
        for (Eigen::Index i = 0; i < na; ++i) {
          const double d = a[i] - b[j];
          d2(i, j) = d * d;
          out.k(i, j) = var * std::exp(-d * d / (2.0 * ell * ell));
        }
      }
      if (with_grad) {
        out.dk.push_back(out.k);
        out.dk.push_back(out.k.cwiseProduct(d2) / (ell * ell));
      }
      break;
    }
    case BaseKind::PER: {
      const double var = cur.take_log();
      const double ell = cur.take_log();
      const double p = cur.take_log();
      MatrixXd dl, dp;
      if (with_grad) {
        dl.resize(na, nb);
        dp.resize(na, nb);
      }
      const double inv_l2 = 1.0 / (ell * ell);
      for (Eigen::Index j = 0; j < nb; ++j) {
        for (Eigen::Index i = 0; i < na; ++i) {
          const double r = std::abs(a[i] - b[j]);
          const double arg = kPi * r / p;
          const double s = std::sin(arg);
          const double kv = var * std::exp(-2.0 * s * s * inv_l2);
          out.k(i, j) = kv;
          if (with_grad) {
            dl(i, j) = kv * 4.0 * s * s * inv_l2;
            dp(i, j) = kv * 4.0 * s * std::cos(arg) * arg * inv_l2;
          }
        }
      }
      if (with_grad) {
        out.dk.push_back(out.k);
        out.dk.push_back(std::move(dl));
        out.dk.push_back(std::move(dp));
      }
      break;
    }
    case BaseKind::LIN: {
      const double var = cur.take_log();
      const double c = cur.take_linear();
      MatrixXd dc;
      if (with_grad) dc.resize(na, nb);
      for (Eigen::Index j = 0; j < nb; ++j) {
        for (Eigen::Index i = 0; i < na; ++i) {
          out.k(i, j) = var * (a[i] - c) * (b[j] - c);
          if (with_grad) dc(i, j) = -var * (a[i] + b[j] - 2.0 * c);
        }
      }
      if (with_grad) {
        out.dk.push_back(out.k);
        out.dk.push_back(std::move(dc));
      }
      break;
    }
    case BaseKind::C: {
      out.k.setConstant(cur.take_log());
      if (with_grad) out.dk.push_back(out.k);
      break;
    }
    case BaseKind::WN: {
      const double var = cur.take_log();
      for (Eigen::Index j = 0; j < nb; ++j) {
        for (Eigen::Index i = 0; i < na; ++i) out.k(i, j) = a[i] == b[j] ? var : 0.0;
      }
      if (with_grad) out.dk.push_back(out.k);
      break;
    }
  }
  return out;
}

Block block_rec(const KernelExpr& e, ParamCursor& cur, std::span<const double> a,
                std::span<const double> b, bool with_grad) {
  if (e.is_leaf()) return leaf_block(e.base(), cur, a, b, with_grad);

  std::vector<Block> parts;
  parts.reserve(e.children().size());
  for (const auto& c : e.children()) parts.push_back(block_rec(c, cur, a, b, with_grad));

  Block out;
  if (e.op() == KernelExpr::Op::Sum) {
    out.k = parts[0].k;
    for (std::size_t i = 1; i < parts.size(); ++i) out.k += parts[i].k;
    if (with_grad) {
      for (auto& p : parts) {
        for (auto& d : p.dk) out.dk.push_back(std::move(d));
      }
    }
    return out;
  }

  out.k = parts[0].k;
  for (std::size_t i = 1; i < parts.size(); ++i) out.k = out.k.cwiseProduct(parts[i].k);
  if (with_grad) {
    for (std::size_t j = 0; j < parts.size(); ++j) {
      MatrixXd others = MatrixXd::Ones(out.k.rows(), out.k.cols());
      for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i != j) others = others.cwiseProduct(parts[i].k);
      }
      for (auto& d : parts[j].dk) out.dk.push_back(d.cwiseProduct(others));
    }
  }
  return out;
}

void check_alignment(const KernelExpr& expr, const ParamVector& params) {
  const auto k = param_schema(expr).k_kernel();
  if (params.size() != k + 1) {
    throw Error("parameter vector has length " + std::to_string(params.size()) + ", expected " +
                std::to_string(k + 1));
  }
}

// Cholesky of A with the jitter ladder 1e-10 .. 1e-6 on failure.
Eigen::LLT<MatrixXd> factorize(const MatrixXd& a) {
  auto ok = [](const Eigen::LLT<MatrixXd>& llt) {
    if (llt.info() != Eigen::Success) return false;
    const auto diag = llt.matrixLLT().diagonal();
    return diag.allFinite() && (diag.array() > 0.0).all();
  };
  Eigen::LLT<MatrixXd> llt(a);
  if (ok(llt)) return llt;
  for (double jitter = 1e-10; jitter <= 1e-6 * 1.0001; jitter *= 10.0) {
    MatrixXd aj = a;
    aj.diagonal().array() += jitter;
    llt.compute(aj);
    if (ok(llt)) return llt;
  }
  throw NumericalError("covariance factorization failed at maximum jitter");
}

MatrixXd training_covariance(const KernelExpr& expr, const ParamVector& params,
                             std::span<const double> x) {
  ParamCursor cur{params.values};
  MatrixXd a = block_rec(expr, cur, x, x, false).k;
  a.diagonal().array() += params.noise_variance();
  return a;
}

}  // namespace

double ParamVector::noise_variance() const { return std::exp(values.back()); }

void validate_params(const ParamSchema& schema, const ParamVector& params) {
  if (params.size() != schema.k_kernel() + 1) {
    throw Error("parameter vector misaligned with schema");
  }
  for (std::size_t i = 0; i < schema.params.size(); ++i) {
    const auto& p = schema.params[i];
    const double v = params.values[i];
    if (!std::isfinite(v) || v < p.lower_opt() - 1e-9 || v > p.upper_opt() + 1e-9) {
      throw Error("parameter " + p.label() + " out of bounds");
    }
  }
  const double noise = params.values.back();
  if (!std::isfinite(noise) || noise < std::log(kNoiseLower) - 1e-9 ||
      noise > std::log(kNoiseUpper) + 1e-9) {
    throw Error("noise variance out of bounds");
  }
}

std::vector<double> natural_values(const ParamSchema& schema, const ParamVector& params) {
  std::vector<double> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < schema.params.size(); ++i) {
    out.push_back(schema.params[i].to_natural(params.values[i]));
  }
  out.push_back(params.noise_variance());
  return out;
}

double kernel_value(const KernelExpr& expr, const ParamVector& params, double x1, double x2) {
  check_alignment(expr, params);
  ParamCursor cur{params.values};
  return value_rec(expr, cur, x1, x2);
}

Eigen::MatrixXd kernel_matrix(const KernelExpr& expr, const ParamVector& params,
                              std::span<const double> a, std::span<const double> b) {
  check_alignment(expr, params);
  ParamCursor cur{params.values};
  return block_rec(expr, cur, a, b, false).k;
}

double log_marginal_likelihood(const KernelExpr& expr, const ParamVector& params,
                               std::span<const double> x, std::span<const double> y) {
  check_alignment(expr, params);
  if (x.size() != y.size() || x.empty()) throw Error("x and y must be non-empty and aligned");
  const auto n = static_cast<Eigen::Index>(x.size());
  auto llt = factorize(training_covariance(expr, params, x));
  const Eigen::Map<const VectorXd> yv(y.data(), n);
  const VectorXd alpha = llt.solve(yv);
  const double log_det_half = llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * yv.dot(alpha) - log_det_half - 0.5 * static_cast<double>(n) * std::log(2.0 * kPi);
}

NllWithGradient nll_and_gradient(const KernelExpr& expr, const ParamVector& params,
                                 std::span<const double> x, std::span<const double> y) {
  check_alignment(expr, params);
  if (x.size() != y.size() || x.empty()) throw Error("x and y must be non-empty and aligned");
  const auto n = static_cast<Eigen::Index>(x.size());

  ParamCursor cur{params.values};
  Block blk = block_rec(expr, cur, x, x, true);
  const double noise = params.noise_variance();
  MatrixXd a = blk.k;
  a.diagonal().array() += noise;
  auto llt = factorize(a);

  const Eigen::Map<const VectorXd> yv(y.data(), n);
  const VectorXd alpha = llt.solve(yv);
  const double log_det_half = llt.matrixLLT().diagonal().array().log().sum();

  NllWithGradient out;
  out.nll = 0.5 * yv.dot(alpha) + log_det_half + 0.5 * static_cast<double>(n) * std::log(2.0 * kPi);

  // d nll / d theta = 0.5 tr((A^-1 - alpha alpha^T) dA/dtheta)
  MatrixXd w = llt.solve(MatrixXd::Identity(n, n));
  w.noalias() -= alpha * alpha.transpose();
  out.gradient.reserve(params.size());
  for (const auto& d : blk.dk) out.gradient.push_back(0.5 * w.cwiseProduct(d).sum());
  out.gradient.push_back(0.5 * noise * w.trace());
  return out;
}

std::vector<double> nll_gradient(const KernelExpr& expr, const ParamVector& params,
                                 std::span<const double> x, std::span<const double> y) {
  return nll_and_gradient(expr, params, x, y).gradient;
}

Posterior posterior_predict(const KernelExpr& expr, const ParamVector& params,
                            std::span<const double> x_train, std::span<const double> y_train,
                            std::span<const double> grid_x) {
  check_alignment(expr, params);
  if (x_train.size() != y_train.size()) throw Error("x and y must be aligned");
  const auto m = static_cast<Eigen::Index>(grid_x.size());
  const double noise = params.noise_variance();

  Posterior post;
  post.grid_x.assign(grid_x.begin(), grid_x.end());
  post.mean.assign(grid_x.size(), 0.0);
  post.variance.resize(grid_x.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    ParamCursor cur{params.values};
    post.variance[i] = value_rec(expr, cur, grid_x[i], grid_x[i]) + noise;
  }

  if (!x_train.empty()) {
    const auto n = static_cast<Eigen::Index>(x_train.size());
    auto llt = factorize(training_covariance(expr, params, x_train));
    const Eigen::Map<const VectorXd> yv(y_train.data(), n);
    const VectorXd alpha = llt.solve(yv);
    ParamCursor cur{params.values};
    const MatrixXd k_star = block_rec(expr, cur, x_train, grid_x, false).k;  // n x m
    const VectorXd mean = k_star.transpose() * alpha;
    const MatrixXd v = llt.matrixL().solve(k_star);
    const VectorXd reduction = v.colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < m; ++i) {
      post.mean[i] = mean(i);
      post.variance[i] -= reduction(i);
    }
  }

  post.low_q.resize(grid_x.size());
  post.high_q.resize(grid_x.size());
  for (std::size_t i = 0; i < grid_x.size(); ++i) {
    post.variance[i] = std::max(post.variance[i], 0.0);
    const double half = kBandZ * std::sqrt(post.variance[i]);
    post.low_q[i] = post.mean[i] - half;
    post.high_q[i] = post.mean[i] + half;
  }
  return post;
}

}  // namespace modeldisc
