#include "hetcal/objectives.hpp"

#include <cmath>

#include "hetcal/errors.hpp"

namespace hetcal::objectives {

void LossWeights::validate() const {
  if (lambda_h < 0.0 || lambda_u < 0.0 || lambda_l < 0.0)
    throw ConfigError("loss weights must be non-negative");
}

namespace {

void check_targets(const Mat& y, const ad::Var& pred) {
  if (!y.same_shape(pred.value()))
    throw ShapeError("target shape " + y.shape_str() + " vs prediction " +
                     pred.value().shape_str());
  if (y.size() == 0) throw DomainError("empty batch");
  if (!y.all_finite()) throw DomainError("non-finite target");
}

}  // namespace

ad::Var gaussian_nll(ad::Tape& tape, const Mat& y, ad::Var mu, ad::Var sigma_sq, double floor) {
  check_targets(y, mu);
  if (!(floor > 0.0)) throw ConfigError("variance floor must be positive");
  if (!mu.value().all_finite() || !sigma_sq.value().all_finite())
    throw DomainError("non-finite input to gaussian_nll");
  for (double v : sigma_sq.value().storage())
    if (v < 0.0) throw DomainError("negative variance entering gaussian_nll");

  ad::Var yv = tape.leaf(y);
  ad::Var s = tape.clamp_min(sigma_sq, floor);
  ad::Var sq_res = tape.square(tape.sub(mu, yv));
  ad::Var quad = tape.div(sq_res, tape.scale(s, 2.0));
  ad::Var log_term = tape.scale(tape.log(s), 0.5);
  return tape.mean(tape.add(quad, log_term));
}

ad::Var pinball(ad::Tape& tape, const Mat& y, ad::Var y_hat, double tau) {
  check_targets(y, y_hat);
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("pinball tau must lie in (0, 1)");
  ad::Var yv = tape.leaf(y);
  ad::Var over = tape.scale(tape.relu(tape.sub(yv, y_hat)), tau);
  ad::Var under = tape.scale(tape.relu(tape.sub(y_hat, yv)), 1.0 - tau);
  return tape.mean(tape.add(over, under));
}

ad::Var quantile_hc_loss(ad::Tape& tape, const Mat& y, ad::Var mu, ad::Var y_u, ad::Var y_l,
                         double tau_u, double tau_l, const LossWeights& w, double floor,
                         bool detach_sigma) {
  if (!(tau_l < tau_u)) throw ConfigError("tau_l must be strictly below tau_u");
  w.validate();
  ad::Var sigma = tape.clamp_min(tape.scale(tape.sub(y_u, y_l), 0.5), std::sqrt(floor));
  ad::Var sigma_sq = tape.square(sigma);
  if (detach_sigma) sigma_sq = tape.detach(sigma_sq);
  ad::Var nll = gaussian_nll(tape, y, mu, sigma_sq, floor);
  ad::Var upper = pinball(tape, y, y_u, tau_u);
  ad::Var lower = pinball(tape, y, y_l, tau_l);
  return tape.add(tape.scale(nll, w.lambda_h),
                  tape.add(tape.scale(upper, w.lambda_u), tape.scale(lower, w.lambda_l)));
}

ad::Var mse(ad::Tape& tape, const Mat& y, ad::Var mu) {
  check_targets(y, mu);
  ad::Var yv = tape.leaf(y);
  return tape.mean(tape.square(tape.sub(mu, yv)));
}

}  // namespace hetcal::objectives
