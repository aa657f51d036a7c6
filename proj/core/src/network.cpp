#include "hetcal/network.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "hetcal/errors.hpp"
#include "hetcal/version.hpp"

namespace hetcal::nn {

using nlohmann::json;

std::size_t head_outputs(Head h) {
  switch (h) {
    case Head::kSingle: return 1;
    case Head::kMeanLogVar: return 2;
    case Head::kMeanQuantiles: return 3;
  }
  return 0;
}

std::string head_name(Head h) {
  switch (h) {
    case Head::kSingle: return "single";
    case Head::kMeanLogVar: return "mean_logvar";
    case Head::kMeanQuantiles: return "mean_quantiles";
  }
  return "?";
}

Head head_from_name(const std::string& name) {
  if (name == "single") return Head::kSingle;
  if (name == "mean_logvar") return Head::kMeanLogVar;
  if (name == "mean_quantiles") return Head::kMeanQuantiles;
  throw ConfigError("unknown head '" + name + "'");
}

void MlpConfig::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (hidden_widths.empty()) throw ConfigError("at least one hidden layer required");
  for (std::size_t w : hidden_widths)
    if (w == 0) throw ConfigError("hidden widths must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout rate must lie in [0, 1)");
}

MlpModel MlpModel::init(const MlpConfig& config) {
  config.validate();
  MlpModel model;
  model.config = config;
  Rng rng(derive_seed(config.seed, fnv1a("init")));
  std::size_t fan_in = config.input_dim;
  auto push_layer = [&](std::size_t out) {
    Layer layer;
    layer.w = Mat(fan_in, out);
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (double& v : layer.w.storage()) v = rng.uniform(-bound, bound);
    layer.b = Mat(1, out);
    model.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (std::size_t w : config.hidden_widths) push_layer(w);
  push_layer(head_outputs(config.head));
  return model;
}

std::size_t MlpModel::param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.w.size() + l.b.size();
  return n;
}

bool MlpModel::params_finite() const {
  for (const Layer& l : layers)
    if (!l.w.all_finite() || !l.b.all_finite()) return false;
  return true;
}

void MlpModel::save(const std::filesystem::path& path) const {
  json j;
  j["format"] = "hetcal-checkpoint";
  j["format_version"] = 1;
  j["artifact_version"] = kVersion;
  j["config"] = {{"input_dim", config.input_dim},
                 {"hidden_widths", config.hidden_widths},
                 {"dropout_rate", config.dropout_rate},
                 {"head", head_name(config.head)},
                 {"seed", config.seed}};
  json jl = json::array();
  for (const Layer& l : layers) {
    jl.push_back({{"rows", l.w.rows()},
                  {"cols", l.w.cols()},
                  {"w", l.w.storage()},
                  {"b", l.b.storage()}});
  }
  j["layers"] = std::move(jl);
  std::ofstream out(path);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  out << j.dump(2) << "\n";
}

MlpModel MlpModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  json j;
  in >> j;
  if (j.value("format", "") != "hetcal-checkpoint")
    throw DataError("not a hetcal checkpoint: " + path.string());
  if (j.value("format_version", 0) != 1)
    throw DataError("unsupported checkpoint version in " + path.string());
  MlpModel model;
  const json& jc = j.at("config");
  model.config.input_dim = jc.at("input_dim").get<std::size_t>();
  model.config.hidden_widths = jc.at("hidden_widths").get<std::vector<std::size_t>>();
  model.config.dropout_rate = jc.at("dropout_rate").get<double>();
  model.config.head = head_from_name(jc.at("head").get<std::string>());
  model.config.seed = jc.at("seed").get<std::uint64_t>();
  for (const json& jl : j.at("layers")) {
    Layer l;
    l.w = Mat(jl.at("rows").get<std::size_t>(), jl.at("cols").get<std::size_t>());
    l.w.storage() = jl.at("w").get<std::vector<double>>();
    if (l.w.storage().size() != l.w.rows() * l.w.cols())
      throw DataError("checkpoint weight size mismatch");
    l.b = Mat(1, l.w.cols());
    l.b.storage() = jl.at("b").get<std::vector<double>>();
    if (l.b.storage().size() != l.w.cols()) throw DataError("checkpoint bias size mismatch");
    model.layers.push_back(std::move(l));
  }
  return model;
}

DropoutMask sample_mask(const MlpConfig& config, std::size_t batch, Rng& rng) {
  DropoutMask mask;
  sample_mask_into(mask, config, batch, rng);
  return mask;
}

void sample_mask_into(DropoutMask& mask, const MlpConfig& config, std::size_t batch, Rng& rng) {
  const double p = config.dropout_rate;
  const double keep_scale = 1.0 / (1.0 - p);
  mask.layers.resize(config.hidden_widths.size());
  for (std::size_t l = 0; l < config.hidden_widths.size(); ++l) {
    Mat& m = mask.layers[l];
    m.resize(batch, config.hidden_widths[l]);
    for (double& v : m.storage()) v = rng.uniform() < p ? 0.0 : keep_scale;
  }
}

StagedParams stage(ad::Tape& tape, const MlpModel& model) {
  StagedParams s;
  s.w.reserve(model.layers.size());
  s.b.reserve(model.layers.size());
  for (const Layer& l : model.layers) {
    s.w.push_back(tape.leaf(l.w));
    s.b.push_back(tape.leaf(l.b));
  }
  return s;
}

std::vector<ad::Var> forward(ad::Tape& tape, const StagedParams& params, const MlpConfig& config,
                             ad::Var x, const DropoutMask* mask) {
  if (x.value().cols() != config.input_dim)
    throw ShapeError("input width " + std::to_string(x.value().cols()) + ", expected " +
                     std::to_string(config.input_dim));
  if (mask && mask->layers.size() != config.hidden_widths.size())
    throw ShapeError("dropout mask layer count mismatch");

  ad::Var h = x;
  const std::size_t n_hidden = config.hidden_widths.size();
  for (std::size_t l = 0; l < n_hidden; ++l) {
    h = tape.relu(tape.add(tape.matmul(h, params.w[l]), params.b[l]));
    if (mask) h = tape.mul(h, tape.leaf(mask->layers[l]));
  }
  ad::Var out = tape.add(tape.matmul(h, params.w[n_hidden]), params.b[n_hidden]);

  const std::size_t k = head_outputs(config.head);
  std::vector<ad::Var> heads;
  if (k == 1) {
    heads.push_back(out);
  } else {
    for (std::size_t j = 0; j < k; ++j) heads.push_back(tape.col(out, j));
  }
  return heads;
}

std::vector<Mat> forward_values(const MlpModel& model, const Mat& x, const DropoutMask* mask) {
  const MlpConfig& config = model.config;
  if (x.cols() != config.input_dim)
    throw ShapeError("input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(config.input_dim));
  Mat h = x;
  const std::size_t n_hidden = config.hidden_widths.size();
  for (std::size_t l = 0; l < n_hidden; ++l) {
    Mat z = matmul(h, model.layers[l].w);
    const Mat& b = model.layers[l].b;
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j) {
        double v = z(i, j) + b(0, j);
        z(i, j) = v > 0.0 ? v : 0.0;
      }
    if (mask) {
      const Mat& m = mask->layers[l];
      for (std::size_t i = 0; i < z.size(); ++i) z.storage()[i] *= m.storage()[i];
    }
    h = std::move(z);
  }
  Mat out = matmul(h, model.layers[n_hidden].w);
  const Mat& b = model.layers[n_hidden].b;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b(0, j);

  std::vector<Mat> heads;
  const std::size_t k = head_outputs(config.head);
  for (std::size_t j = 0; j < k; ++j) {
    Mat c(out.rows(), 1);
    for (std::size_t i = 0; i < out.rows(); ++i) c(i, 0) = out(i, j);
    heads.push_back(std::move(c));
  }
  return heads;
}

AdamState AdamState::init(const MlpModel& model) {
  AdamState s;
  for (const Layer& l : model.layers) {
    s.m_w.emplace_back(l.w.rows(), l.w.cols());
    s.v_w.emplace_back(l.w.rows(), l.w.cols());
    s.m_b.emplace_back(1, l.b.cols());
    s.v_b.emplace_back(1, l.b.cols());
  }
  return s;
}

void adam_apply(Mat& param, Mat& grad, Mat& m, Mat& v, const AdamState& s, double lr) {
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.storage()[i];
    if (!std::isfinite(g)) throw DivergenceError("non-finite gradient");
    double& mi = m.storage()[i];
    double& vi = v.storage()[i];
    mi = s.beta1 * mi + (1.0 - s.beta1) * g;
    vi = s.beta2 * vi + (1.0 - s.beta2) * g * g;
    param.storage()[i] -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + s.eps);
    grad.storage()[i] = 0.0;
  }
}

void adam_step(MlpModel& model, const StagedParams& params, AdamState& state, double lr) {
  state.step += 1;
  ad::Tape* tape = params.w.front().tape();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    adam_apply(model.layers[l].w, tape->node(params.w[l].id()).grad, state.m_w[l], state.v_w[l],
               state, lr);
    adam_apply(model.layers[l].b, tape->node(params.b[l].id()).grad, state.m_b[l], state.v_b[l],
               state, lr);
  }
}

}  // namespace hetcal::nn
