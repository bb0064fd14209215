#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "modeldisc/kernel_dsl.hpp"

namespace modeldisc {

/// Kernel hyperparameters in optimizer space (log for positive quantities,
/// linear for LIN offsets), aligned with param_schema(expr), followed by the
/// log of the Gaussian noise variance.
struct ParamVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double noise_variance() const;
  std::span<const double> kernel_part() const {
    return std::span<const double>(values).first(values.size() - 1);
  }

  bool operator==(const ParamVector&) const = default;
};

/// Noise variance bounds (natural units).
inline constexpr double kNoiseLower = 1e-6;
inline constexpr double kNoiseUpper = 10.0;

/// Checks length and bounds against the schema; throws Error when misaligned.
void validate_params(const ParamSchema& schema, const ParamVector& params);

/// Natural-unit value of each schema parameter followed by the noise variance.
std::vector<double> natural_values(const ParamSchema& schema, const ParamVector& params);

/// Predictive distribution on a grid. Bands are mean -/+ 1.96 sd and include
/// the observation noise.
struct Posterior {
  std::vector<double> grid_x;
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> low_q;
  std::vector<double> high_q;
};

inline constexpr double kBandZ = 1.96;

double kernel_value(const KernelExpr& expr, const ParamVector& params, double x1, double x2);

/// Cross-covariance K(a, b) of the kernel alone (no noise term).
Eigen::MatrixXd kernel_matrix(const KernelExpr& expr, const ParamVector& params,
                              std::span<const double> a, std::span<const double> b);

/// log N(y | 0, K + noise I). Throws NumericalError if the factorization fails
/// even with the largest jitter.
double log_marginal_likelihood(const KernelExpr& expr, const ParamVector& params,
                               std::span<const double> x, std::span<const double> y);

struct NllWithGradient {
  double nll;
  std::vector<double> gradient;  // d(-logML)/d(optimizer-space params)
};

NllWithGradient nll_and_gradient(const KernelExpr& expr, const ParamVector& params,
                                 std::span<const double> x, std::span<const double> y);

std::vector<double> nll_gradient(const KernelExpr& expr, const ParamVector& params,
                                 std::span<const double> x, std::span<const double> y);

Posterior posterior_predict(const KernelExpr& expr, const ParamVector& params,
                            std::span<const double> x_train, std::span<const double> y_train,
                            std::span<const double> grid_x);

}  // namespace modeldisc
