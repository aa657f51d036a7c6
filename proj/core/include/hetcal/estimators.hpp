#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hetcal/data.hpp"
#include "hetcal/errors.hpp"
#include "hetcal/network.hpp"
#include "hetcal/objectives.hpp"
#include "hetcal/prediction.hpp"

namespace hetcal::estimators {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t mc_train = 16;     // Monte-Carlo passes per training step (dropout_hc)
  std::size_t mc_predict = 128;  // Monte-Carlo passes at prediction time
  double dropout_rate = 0.2;
  double tau_u = 0.9;
  double tau_l = 0.1;
  objectives::LossWeights weights;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double variance_floor = objectives::kDefaultVarianceFloor;
  std::vector<std::size_t> hidden_widths = {64, 64, 64, 64, 64};

  // Global L2 gradient-norm clip applied before each Adam update (0 disables).
  // The NLL term spikes like 1/floor while sigma sits at the floor early in
  // training; unclipped spikes poison Adam's second-moment average.
  double grad_clip_norm = 10.0;

  // ablation switches
  bool stop_grad_sigma = false;        // detach sigma^2 in the calibration term
  bool unbiased_variance = false;      // Monte-Carlo variance divisor M-1 instead of M
  bool dropout_in_deterministic = false;  // apply dropout while training hnn / quantile_hc

  void validate_common() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

// One line per epoch: {"epoch":...,"loss":...,"wall_ms":...}
std::string to_jsonl(const std::vector<EpochLog>& log);

struct TrainResult {
  nn::MlpModel model;
  std::vector<EpochLog> log;
};

// Divergence with the completed-epoch log attached so callers can persist it.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const DivergenceError& base, std::vector<EpochLog> log)
      : DivergenceError(base), partial_log(std::move(log)) {}

  std::vector<EpochLog> partial_log;
};

// MC Dropout epistemic estimator with heteroscedastic calibration: every step
// runs M masked passes, forms differentiable Monte-Carlo mean and variance,
// and minimizes the Gaussian NLL through both.
TrainResult train_dropout_hc(const data::Dataset& ds, const data::Split& split,
                             const TrainConfig& cfg);

// Quantile aleatoric estimator with heteroscedastic calibration: one
// deterministic pass yields (mu, y_u, y_l); sigma = (y_u - y_l)/2 feeds the
// NLL term alongside both pinball losses.
TrainResult train_quantile_hc(const data::Dataset& ds, const data::Split& split,
                              const TrainConfig& cfg);

// Plain MC Dropout baseline: MSE training with dropout active; uncertainty
// arises only from prediction-time mask sampling.
TrainResult train_mc_dropout(const data::Dataset& ds, const data::Split& split,
                             const TrainConfig& cfg);

// Heteroscedastic network baseline: two-output head, sigma^2 = exp(logvar),
// trained jointly with the Gaussian NLL.
TrainResult train_hnn(const data::Dataset& ds, const data::Split& split, const TrainConfig& cfg);

TrainResult train(Estimator tag, const data::Dataset& ds, const data::Split& split,
                  const TrainConfig& cfg);

// Predicts (mu, sigma) for the given rows and de-standardizes into original
// target units. Monte-Carlo estimators resample masks (population-std sigma);
// hnn uses exp(logvar/2); quantile_hc uses the half inter-quantile range
// clamped at zero.
PredictionSet predict(const nn::MlpModel& model, Estimator tag, const data::Dataset& ds,
                      std::span<const std::size_t> rows, const TrainConfig& cfg);

}  // namespace hetcal::estimators
