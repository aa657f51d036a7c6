#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hetcal/autodiff.hpp"
#include "hetcal/matrix.hpp"
#include "hetcal/rng.hpp"

namespace hetcal::nn {

enum class Head : std::uint8_t {
  kSingle,         // mu
  kMeanLogVar,     // mu, log sigma^2
  kMeanQuantiles,  // mu, y_upper, y_lower
};

std::size_t head_outputs(Head h);
std::string head_name(Head h);
Head head_from_name(const std::string& name);

struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths = {64, 64, 64, 64, 64};
  double dropout_rate = 0.2;  // p in [0, 1)
  Head head = Head::kSingle;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct Layer {
  Mat w;  // in x out
  Mat b;  // 1 x out
};

// Per-hidden-layer inverted-dropout masks: entries are 0 or 1/(1-p), sampled
// Bernoulli(1-p) per unit per batch row.
struct DropoutMask {
  std::vector<Mat> layers;
};

class MlpModel {
 public:
  MlpConfig config;
  std::vector<Layer> layers;  // hidden layers then the head layer

  // Weights uniform in +-sqrt(1/fan_in), biases zero, deterministic in seed.
  static MlpModel init(const MlpConfig& config);

  std::size_t param_count() const;
  bool params_finite() const;

  // Versioned JSON checkpoint; float64-lossless round trip.
  void save(const std::filesystem::path& path) const;
  static MlpModel load(const std::filesystem::path& path);
};

DropoutMask sample_mask(const MlpConfig& config, std::size_t batch, Rng& rng);

// Refills an existing mask in place (no allocation once shaped).
void sample_mask_into(DropoutMask& mask, const MlpConfig& config, std::size_t batch, Rng& rng);

// Model parameters staged as tape leaves for one optimization step; gradients
// accumulate on these leaves across however many forward passes share them.
struct StagedParams {
  std::vector<ad::Var> w;
  std::vector<ad::Var> b;
};

StagedParams stage(ad::Tape& tape, const MlpModel& model);

// Recorded forward pass. mask == nullptr runs deterministically; otherwise the
// mask (one Mat per hidden layer) is applied after each hidden activation.
// Returns one Var per head output, each batch x 1.
std::vector<ad::Var> forward(ad::Tape& tape, const StagedParams& params, const MlpConfig& config,
                             ad::Var x, const DropoutMask* mask);

// Plain forward for prediction: same kernels and evaluation order as the
// recorded pass, so values agree bit-for-bit.
std::vector<Mat> forward_values(const MlpModel& model, const Mat& x, const DropoutMask* mask);

struct AdamState {
  std::vector<Mat> m_w, v_w, m_b, v_b;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const MlpModel& model);
};

// Adam update from the gradients accumulated on the staged leaves; advances
// the state and zeroes those gradients. Non-finite gradients raise
// DivergenceError (the caller annotates the epoch).
void adam_step(MlpModel& model, const StagedParams& params, AdamState& state, double lr);

// One Adam update for a single parameter block at (already advanced) step
// `state.step`; grad is consumed and zeroed.
void adam_apply(Mat& param, Mat& grad, Mat& m, Mat& v, const AdamState& state, double lr);

}  // namespace hetcal::nn
