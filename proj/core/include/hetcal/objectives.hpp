#pragma once

#include "hetcal/autodiff.hpp"
#include "hetcal/matrix.hpp"

namespace hetcal::objectives {

// Composite-loss weights; defaults follow the Quantile-HC training recipe.
struct LossWeights {
  double lambda_h = 0.75;
  double lambda_u = 1.0;
  double lambda_l = 1.0;

  void validate() const;
};

inline constexpr double kDefaultVarianceFloor = 1e-6;

// Heteroscedastic Gaussian negative log-likelihood, averaged over the batch:
//   (y - mu)^2 / (2 s) + log(s) / 2,   s = max(sigma_sq, floor).
// Differentiable in mu and sigma_sq. May be negative when s < 1.
ad::Var gaussian_nll(ad::Tape& tape, const Mat& y, ad::Var mu, ad::Var sigma_sq, double floor);

// Pinball (quantile) loss at level tau, averaged over the batch:
//   tau * (y - yhat)        if y - yhat >= 0
//   (1 - tau) * (yhat - y)  otherwise
// Loss and gradient are both zero at y == yhat.
ad::Var pinball(ad::Tape& tape, const Mat& y, ad::Var y_hat, double tau);

// Quantile-regression composite with heteroscedastic calibration:
//   lambda_h * NLL(y, mu, sigma^2) + lambda_u * pinball(y, y_u, tau_u)
//                                  + lambda_l * pinball(y, y_l, tau_l)
// where sigma = (y_u - y_l) / 2, clamped below at sqrt(floor) so crossed
// quantiles stay finite and the pinball terms repair the ordering.
// detach_sigma cuts the gradient path through sigma (ablation).
ad::Var quantile_hc_loss(ad::Tape& tape, const Mat& y, ad::Var mu, ad::Var y_u, ad::Var y_l,
                         double tau_u, double tau_l, const LossWeights& w, double floor,
                         bool detach_sigma = false);

// Mean squared error over the batch.
ad::Var mse(ad::Tape& tape, const Mat& y, ad::Var mu);

}  // namespace hetcal::objectives
