#include "hetcal/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "hetcal/errors.hpp"
#include "hetcal/rng.hpp"

namespace hetcal::estimators {

void TrainConfig::validate_common() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(variance_floor > 0.0)) throw ConfigError("variance floor must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1)");
  weights.validate();
}

std::string to_jsonl(const std::vector<EpochLog>& log) {
  std::string out;
  char buf[160];
  for (const EpochLog& e : log) {
    std::snprintf(buf, sizeof(buf), "{\"epoch\":%zu,\"loss\":%.17g,\"wall_ms\":%.3f}\n", e.epoch,
                  e.loss, e.wall_ms);
    out += buf;
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void gather_rows_into(Mat& out, const Mat& src, std::span<const std::size_t> rows) {
  out.resize(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) out(i, j) = src(rows[i], j);
}

Mat gather_rows(const Mat& src, std::span<const std::size_t> rows) {
  Mat out;
  gather_rows_into(out, src, rows);
  return out;
}

void gather_targets_into(Mat& out, const std::vector<double>& y,
                         std::span<const std::size_t> rows) {
  out.resize(rows.size(), 1);
  for (std::size_t i = 0; i < rows.size(); ++i) out(i, 0) = y[rows[i]];
}

void clip_gradients(ad::Tape& tape, const nn::StagedParams& staged, double max_norm) {
  double sq = 0.0;
  auto accumulate = [&](const std::vector<ad::Var>& vars) {
    for (ad::Var v : vars)
      for (double g : tape.node(v.id()).grad.storage()) sq += g * g;
  };
  accumulate(staged.w);
  accumulate(staged.b);
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double scale = max_norm / norm;
  auto rescale = [&](const std::vector<ad::Var>& vars) {
    for (ad::Var v : vars)
      for (double& g : tape.node(v.id()).grad.storage()) g *= scale;
  };
  rescale(staged.w);
  rescale(staged.b);
}

// Per-batch loss graph builder; returns the scalar loss Var.
using StepFn = std::function<ad::Var(ad::Tape&, const nn::StagedParams&, ad::Var x, const Mat& y,
                                     Rng& mask_rng)>;

TrainResult run_training(const data::Dataset& ds, const data::Split& split, const TrainConfig& cfg,
                         nn::Head head, const StepFn& step) {
  cfg.validate_common();
  if (ds.dim() == 0) throw ConfigError("dataset has no features");
  if (split.train_idx.empty()) throw ConfigError("empty train split");

  nn::MlpConfig mc;
  mc.input_dim = ds.dim();
  mc.hidden_widths = cfg.hidden_widths;
  mc.dropout_rate = cfg.dropout_rate;
  mc.head = head;
  mc.seed = derive_seed(cfg.seed, fnv1a("model-init"));

  TrainResult result;
  result.model = nn::MlpModel::init(mc);
  nn::AdamState opt = nn::AdamState::init(result.model);
  Rng shuffle_rng(derive_seed(cfg.seed, fnv1a("shuffle")));
  Rng mask_rng(derive_seed(cfg.seed, fnv1a("masks")));

  std::vector<std::size_t> order = split.train_idx;
  const std::size_t n_train = order.size();
  ad::Tape tape;
  Mat xb, yb;

  const auto t0 = Clock::now();
  try {
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n_train - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.index(i + 1)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, n_train);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      gather_rows_into(xb, ds.x, rows);
      gather_targets_into(yb, ds.y, rows);

      tape.clear();
      nn::StagedParams staged = nn::stage(tape, result.model);
      ad::Var x = tape.leaf(xb);
      ad::Var loss = [&] {
        try {
          return step(tape, staged, x, yb, mask_rng);
        } catch (const DomainError& e) {
          // data is validated at ingestion, so a mid-training domain blowup
          // (exp overflow, division by a collapsed value) is divergence
          throw DivergenceError(std::string("loss exploded: ") + e.what(), (long)epoch);
        }
      }();

      const double loss_value = loss.value()(0, 0);
      if (!std::isfinite(loss_value)) throw DivergenceError("non-finite loss", (long)epoch);
      epoch_loss += loss_value * static_cast<double>(rows.size());

      tape.backward(loss);
      if (cfg.grad_clip_norm > 0.0) clip_gradients(tape, staged, cfg.grad_clip_norm);
      try {
        nn::adam_step(result.model, staged, opt, cfg.learning_rate);
      } catch (const DivergenceError& e) {
        throw DivergenceError(e.what(), (long)epoch);
      }
      if (!result.model.params_finite())
        throw DivergenceError("non-finite parameter after update", (long)epoch);
    }
    result.log.push_back({epoch, epoch_loss / static_cast<double>(n_train), ms_since(t0)});
  }
  } catch (const DivergenceError& e) {
    throw TrainingDiverged(e, std::move(result.log));
  }
  return result;
}

}  // namespace

TrainResult train_dropout_hc(const data::Dataset& ds, const data::Split& split,
                             const TrainConfig& cfg) {
  if (!(cfg.dropout_rate > 0.0))
    throw ConfigError("dropout_hc requires a positive dropout rate");
  if (cfg.mc_train < 2) throw ConfigError("dropout_hc requires at least 2 Monte-Carlo passes");

  return run_training(
      ds, split, cfg, nn::Head::kSingle,
      [&cfg, mask = nn::DropoutMask{}, samples = std::vector<ad::Var>{}](
          ad::Tape& tape, const nn::StagedParams& staged, ad::Var x, const Mat& y,
          Rng& mask_rng) mutable {
        nn::MlpConfig mc_cfg;
        mc_cfg.input_dim = x.value().cols();
        mc_cfg.hidden_widths = cfg.hidden_widths;
        mc_cfg.dropout_rate = cfg.dropout_rate;
        mc_cfg.head = nn::Head::kSingle;
        samples.clear();
        samples.reserve(cfg.mc_train);
        for (std::size_t j = 0; j < cfg.mc_train; ++j) {
          nn::sample_mask_into(mask, mc_cfg, x.value().rows(), mask_rng);
          samples.push_back(nn::forward(tape, staged, mc_cfg, x, &mask)[0]);
        }
        auto [mu, var] = tape.mean_and_variance(samples, cfg.unbiased_variance);
        ad::Var sigma_sq = cfg.stop_grad_sigma ? tape.detach(var) : var;
        return objectives::gaussian_nll(tape, y, mu, sigma_sq, cfg.variance_floor);
      });
}

TrainResult train_quantile_hc(const data::Dataset& ds, const data::Split& split,
                              const TrainConfig& cfg) {
  if (!(cfg.tau_l < cfg.tau_u)) throw ConfigError("quantile_hc requires tau_l < tau_u");
  if (!(cfg.tau_u > 0.0 && cfg.tau_u < 1.0 && cfg.tau_l > 0.0 && cfg.tau_l < 1.0))
    throw ConfigError("quantile levels must lie in (0, 1)");

  return run_training(
      ds, split, cfg, nn::Head::kMeanQuantiles,
      [&cfg](ad::Tape& tape, const nn::StagedParams& staged, ad::Var x, const Mat& y,
             Rng& mask_rng) {
        nn::MlpConfig mc_cfg;
        mc_cfg.input_dim = x.value().cols();
        mc_cfg.hidden_widths = cfg.hidden_widths;
        mc_cfg.dropout_rate = cfg.dropout_rate;
        mc_cfg.head = nn::Head::kMeanQuantiles;
        std::vector<ad::Var> heads;
        if (cfg.dropout_in_deterministic && cfg.dropout_rate > 0.0) {
          nn::DropoutMask mask = nn::sample_mask(mc_cfg, x.value().rows(), mask_rng);
          heads = nn::forward(tape, staged, mc_cfg, x, &mask);
        } else {
          heads = nn::forward(tape, staged, mc_cfg, x, nullptr);
        }
        return objectives::quantile_hc_loss(tape, y, heads[0], heads[1], heads[2], cfg.tau_u,
                                            cfg.tau_l, cfg.weights, cfg.variance_floor,
                                            cfg.stop_grad_sigma);
      });
}

TrainResult train_mc_dropout(const data::Dataset& ds, const data::Split& split,
                             const TrainConfig& cfg) {
  if (!(cfg.dropout_rate > 0.0))
    throw ConfigError("mc_dropout requires a positive dropout rate (no epistemic signal at p=0)");

  return run_training(
      ds, split, cfg, nn::Head::kSingle,
      [&cfg](ad::Tape& tape, const nn::StagedParams& staged, ad::Var x, const Mat& y,
             Rng& mask_rng) {
        nn::MlpConfig mc_cfg;
        mc_cfg.input_dim = x.value().cols();
        mc_cfg.hidden_widths = cfg.hidden_widths;
        mc_cfg.dropout_rate = cfg.dropout_rate;
        mc_cfg.head = nn::Head::kSingle;
        nn::DropoutMask mask = nn::sample_mask(mc_cfg, x.value().rows(), mask_rng);
        ad::Var mu = nn::forward(tape, staged, mc_cfg, x, &mask)[0];
        return objectives::mse(tape, y, mu);
      });
}

TrainResult train_hnn(const data::Dataset& ds, const data::Split& split, const TrainConfig& cfg) {
  return run_training(
      ds, split, cfg, nn::Head::kMeanLogVar,
      [&cfg](ad::Tape& tape, const nn::StagedParams& staged, ad::Var x, const Mat& y,
             Rng& mask_rng) {
        nn::MlpConfig mc_cfg;
        mc_cfg.input_dim = x.value().cols();
        mc_cfg.hidden_widths = cfg.hidden_widths;
        mc_cfg.dropout_rate = cfg.dropout_rate;
        mc_cfg.head = nn::Head::kMeanLogVar;
        std::vector<ad::Var> heads;
        if (cfg.dropout_in_deterministic && cfg.dropout_rate > 0.0) {
          nn::DropoutMask mask = nn::sample_mask(mc_cfg, x.value().rows(), mask_rng);
          heads = nn::forward(tape, staged, mc_cfg, x, &mask);
        } else {
          heads = nn::forward(tape, staged, mc_cfg, x, nullptr);
        }
        ad::Var sigma_sq = tape.exp(heads[1]);  // exp(logvar) keeps variance positive
        return objectives::gaussian_nll(tape, y, heads[0], sigma_sq, cfg.variance_floor);
      });
}

TrainResult train(Estimator tag, const data::Dataset& ds, const data::Split& split,
                  const TrainConfig& cfg) {
  switch (tag) {
    case Estimator::kMcDropout: return train_mc_dropout(ds, split, cfg);
    case Estimator::kHnn: return train_hnn(ds, split, cfg);
    case Estimator::kDropoutHc: return train_dropout_hc(ds, split, cfg);
    case Estimator::kQuantileHc: return train_quantile_hc(ds, split, cfg);
  }
  throw ConfigError("unknown estimator tag");
}

PredictionSet predict(const nn::MlpModel& model, Estimator tag, const data::Dataset& ds,
                      std::span<const std::size_t> rows, const TrainConfig& cfg) {
  const bool mc = (tag == Estimator::kMcDropout || tag == Estimator::kDropoutHc);
  const nn::Head expected = mc                              ? nn::Head::kSingle
                            : tag == Estimator::kHnn        ? nn::Head::kMeanLogVar
                                                            : nn::Head::kMeanQuantiles;
  if (model.config.head != expected)
    throw ConfigError("model head '" + nn::head_name(model.config.head) +
                      "' does not match estimator '" + estimator_name(tag) + "'");
  if (rows.empty()) throw DomainError("predict on empty row set");

  Mat x = gather_rows(ds.x, rows);
  const std::size_t n = rows.size();
  PredictionSet out;
  out.tag = tag;
  out.mu.resize(n);
  out.sigma.resize(n);
  out.y.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.y[i] = ds.standardized ? ds.destandardize_target(ds.y[rows[i]]) : ds.y[rows[i]];

  if (mc) {
    const std::size_t m = std::max<std::size_t>(cfg.mc_predict, 2);
    Rng rng(derive_seed(cfg.seed, fnv1a("predict-masks")));
    std::vector<Mat> passes;
    passes.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
      nn::DropoutMask mask = nn::sample_mask(model.config, n, rng);
      passes.push_back(nn::forward_values(model, x, &mask)[0]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double lo = passes[0](i, 0), hi = lo, sum = 0.0;
      for (const Mat& p : passes) {
        const double v = p(i, 0);
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double mean = sum / static_cast<double>(m);
      double sd = 0.0;
      if (hi > lo) {  // constant passes have exactly zero spread
        double acc = 0.0;
        for (const Mat& p : passes) {
          const double d = p(i, 0) - mean;
          acc += d * d;
        }
        sd = std::sqrt(acc / static_cast<double>(m));
      }
      out.mu[i] = mean;
      out.sigma[i] = sd;
    }
  } else if (tag == Estimator::kHnn) {
    std::vector<Mat> heads = nn::forward_values(model, x, nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      out.mu[i] = heads[0](i, 0);
      out.sigma[i] = std::exp(0.5 * heads[1](i, 0));
    }
  } else {
    std::vector<Mat> heads = nn::forward_values(model, x, nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      out.mu[i] = heads[0](i, 0);
      out.sigma[i] = std::max(0.5 * (heads[1](i, 0) - heads[2](i, 0)), 0.0);
    }
  }

  if (ds.standardized) {
    for (std::size_t i = 0; i < n; ++i) {
      out.mu[i] = ds.destandardize_target(out.mu[i]);
      out.sigma[i] = ds.destandardize_scale(out.sigma[i]);
    }
  }
  out.validate();
  return out;
}

}  // namespace hetcal::estimators
