#include "modeldisc/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "modeldisc/errors.hpp"

namespace modeldisc {

double bic(double train_loglik, int n_params, int n_data) {
  if (n_data < 1 || n_params < 1) throw Error("bic needs n_data >= 1 and n_params >= 1");
  return -2.0 * train_loglik + static_cast<double>(n_params) * std::log(static_cast<double>(n_data));
}

double vic(double bic_value, double evaluator_total, double alpha) {
  return alpha * evaluator_total - bic_value;
}

ScoreRecord make_score_record(double bic_value, double resemblance, double uncertainty,
                              double generalizability, double alpha, int round_index) {
  ScoreRecord r;
  r.bic = bic_value;
  r.fitness_score = std::clamp(resemblance, 0.0, 50.0) + std::clamp(uncertainty, 0.0, 50.0);
  r.generalizability_score = std::clamp(generalizability, 0.0, 50.0);
  r.evaluator_total = r.fitness_score + r.generalizability_score;
  r.alpha = alpha;
  r.vic = vic(bic_value, r.evaluator_total, alpha);
  r.round_index = round_index;
  return r;
}

}  // namespace modeldisc
