#pragma once

namespace modeldisc {

inline constexpr double kDefaultAlpha = 50.0;

/// Per-record scores. `vic` is always alpha * evaluator_total - bic.
struct ScoreRecord {
  double bic = 0.0;
  double fitness_score = 0.0;           // [0, 100]: resemblance + uncertainty
  double generalizability_score = 0.0;  // [0, 50]
  double evaluator_total = 0.0;         // [0, 150]
  double alpha = kDefaultAlpha;
  double vic = 0.0;
  int round_index = 0;
  bool evaluation_failed = false;
};

/// -2 loglik + n_params ln(n_data); n_params counts the noise variance.
double bic(double train_loglik, int n_params, int n_data);

/// Higher is better.
double vic(double bic_value, double evaluator_total, double alpha);

/// Clamps the components into range and fills the derived fields.
ScoreRecord make_score_record(double bic_value, double resemblance, double uncertainty,
                              double generalizability, double alpha, int round_index);

}  // namespace modeldisc
