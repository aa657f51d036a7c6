#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "hetcal/errors.hpp"
#include "hetcal/network.hpp"
#include "hetcal/rng.hpp"
#include "support/finite_diff.hpp"

using namespace hetcal;

namespace {

nn::MlpConfig small_config(nn::Head head = nn::Head::kSingle) {
  nn::MlpConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden_widths = {8, 8};
  cfg.dropout_rate = 0.2;
  cfg.head = head;
  cfg.seed = 17;
  return cfg;
}

Mat random_input(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Mat x(rows, cols);
  for (double& v : x.storage()) v = rng.normal();
  return x;
}

bool mats_equal(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.storage()[i] != b.storage()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("init is deterministic under the seed and biases start at zero") {
  nn::MlpModel m1 = nn::MlpModel::init(small_config());
  nn::MlpModel m2 = nn::MlpModel::init(small_config());
  REQUIRE(m1.layers.size() == 3);
  for (std::size_t l = 0; l < m1.layers.size(); ++l) {
    CHECK(mats_equal(m1.layers[l].w, m2.layers[l].w));
    for (double b : m1.layers[l].b.storage()) CHECK(b == 0.0);
  }

  nn::MlpConfig other = small_config();
  other.seed = 18;
  nn::MlpModel m3 = nn::MlpModel::init(other);
  CHECK_FALSE(mats_equal(m1.layers[0].w, m3.layers[0].w));
}

TEST_CASE("weight init is zero-mean at the fan-in scale") {
  nn::MlpConfig cfg;
  cfg.input_dim = 100;
  cfg.hidden_widths = {100};
  cfg.seed = 4;
  nn::MlpModel m = nn::MlpModel::init(cfg);
  const Mat& w = m.layers[0].w;  // 10^4 draws from U(-a, a), a = sqrt(1/100)
  REQUIRE(w.size() == 10000);
  double mean = 0.0;
  for (double v : w.storage()) mean += v;
  mean /= static_cast<double>(w.size());
  const double a = std::sqrt(1.0 / 100.0);
  const double se = a / std::sqrt(3.0 * static_cast<double>(w.size()));
  CHECK(std::abs(mean) < 3.0 * se);
  for (double v : w.storage()) CHECK(std::abs(v) <= a);
}

TEST_CASE("invalid configs are rejected") {
  nn::MlpConfig cfg = small_config();
  cfg.input_dim = 0;
  CHECK_THROWS_AS(nn::MlpModel::init(cfg), ConfigError);
  cfg = small_config();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(nn::MlpModel::init(cfg), ConfigError);
  cfg = small_config();
  cfg.hidden_widths = {8, 0};
  CHECK_THROWS_AS(nn::MlpModel::init(cfg), ConfigError);
}

TEST_CASE("head output counts") {
  for (auto [head, k] : {std::pair{nn::Head::kSingle, std::size_t{1}},
                         std::pair{nn::Head::kMeanLogVar, std::size_t{2}},
                         std::pair{nn::Head::kMeanQuantiles, std::size_t{3}}}) {
    nn::MlpModel m = nn::MlpModel::init(small_config(head));
    Mat x = random_input(5, 3, 9);
    CHECK(nn::forward_values(m, x, nullptr).size() == k);

    ad::Tape tape;
    nn::StagedParams staged = nn::stage(tape, m);
    CHECK(nn::forward(tape, staged, m.config, tape.leaf(x), nullptr).size() == k);
  }
}

TEST_CASE("recorded and plain forward agree bit for bit") {
  nn::MlpModel m = nn::MlpModel::init(small_config(nn::Head::kMeanQuantiles));
  Mat x = random_input(6, 3, 31);
  Rng mask_rng(77);
  nn::DropoutMask mask = nn::sample_mask(m.config, 6, mask_rng);

  const nn::DropoutMask* variants[] = {nullptr, &mask};
  for (const nn::DropoutMask* mp : variants) {
    std::vector<Mat> plain = nn::forward_values(m, x, mp);
    ad::Tape tape;
    nn::StagedParams staged = nn::stage(tape, m);
    std::vector<ad::Var> rec = nn::forward(tape, staged, m.config, tape.leaf(x), mp);
    REQUIRE(plain.size() == rec.size());
    for (std::size_t k = 0; k < plain.size(); ++k) CHECK(mats_equal(plain[k], rec[k].value()));
  }
}

TEST_CASE("p=0 dropout mode equals deterministic mode exactly") {
  nn::MlpConfig cfg = small_config();
  cfg.dropout_rate = 0.0;
  nn::MlpModel m = nn::MlpModel::init(cfg);
  Mat x = random_input(4, 3, 2);
  Rng rng(5);
  nn::DropoutMask mask = nn::sample_mask(cfg, 4, rng);
  for (const Mat& layer : mask.layers)
    for (double v : layer.storage()) CHECK(v == 1.0);
  CHECK(mats_equal(nn::forward_values(m, x, &mask)[0], nn::forward_values(m, x, nullptr)[0]));
}

TEST_CASE("all-zero parameters produce zero outputs") {
  nn::MlpModel m = nn::MlpModel::init(small_config(nn::Head::kMeanQuantiles));
  for (nn::Layer& l : m.layers) {
    l.w.zero();
    l.b.zero();
  }
  Mat x = random_input(5, 3, 12);
  for (const Mat& head : nn::forward_values(m, x, nullptr))
    for (double v : head.storage()) CHECK(v == 0.0);
}

TEST_CASE("fixed mask makes repeated dropout forwards bit-identical") {
  nn::MlpModel m = nn::MlpModel::init(small_config());
  Mat x = random_input(4, 3, 8);
  Rng rng(123);
  nn::DropoutMask mask = nn::sample_mask(m.config, 4, rng);
  Mat out1 = nn::forward_values(m, x, &mask)[0];
  Mat out2 = nn::forward_values(m, x, &mask)[0];
  CHECK(mats_equal(out1, out2));
}

TEST_CASE("input width mismatch raises a shape error") {
  nn::MlpModel m = nn::MlpModel::init(small_config());
  Mat x = random_input(4, 2, 8);
  CHECK_THROWS_AS(nn::forward_values(m, x, nullptr), ShapeError);
}

TEST_CASE("inverted dropout keeps the output expectation") {
  nn::MlpModel m = nn::MlpModel::init(small_config());
  Mat x = random_input(1, 3, 55);
  const double det = nn::forward_values(m, x, nullptr)[0](0, 0);

  Rng rng(999);
  const std::size_t n = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    nn::DropoutMask mask = nn::sample_mask(m.config, 1, rng);
    const double v = nn::forward_values(m, x, &mask)[0](0, 0);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum_sq / n - mean * mean);
  // Expectation equality holds per-layer; depth-2 relu composition keeps it
  // close enough that a 4-sigma band is stable across seeds.
  CHECK(std::abs(mean - det) < 4.0 * sd / std::sqrt(static_cast<double>(n)) + 1e-3);
}

TEST_CASE("checkpoint round trip is lossless") {
  nn::MlpModel m = nn::MlpModel::init(small_config(nn::Head::kMeanLogVar));
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "hetcal_ckpt_test.json";
  m.save(path);
  nn::MlpModel loaded = nn::MlpModel::load(path);
  std::filesystem::remove(path);

  CHECK(loaded.config.input_dim == m.config.input_dim);
  CHECK(loaded.config.hidden_widths == m.config.hidden_widths);
  CHECK(loaded.config.dropout_rate == m.config.dropout_rate);
  CHECK(loaded.config.head == m.config.head);
  CHECK(loaded.config.seed == m.config.seed);

  Mat x = random_input(7, 3, 61);
  std::vector<Mat> a = nn::forward_values(m, x, nullptr);
  std::vector<Mat> b = nn::forward_values(loaded, x, nullptr);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(mats_equal(a[k], b[k]));
}

TEST_CASE("loading a non-checkpoint file fails cleanly") {
  const std::filesystem::path path = std::filesystem::temp_directory_path() / "not_ckpt.json";
  std::FILE* f = std::fopen(path.c_str(), "w");
  std::fputs("{\"format\":\"other\"}", f);
  std::fclose(f);
  CHECK_THROWS_AS(nn::MlpModel::load(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  nn::MlpModel m = nn::MlpModel::init(small_config());
  nn::MlpModel before = m;
  nn::AdamState state = nn::AdamState::init(m);
  ad::Tape tape;
  nn::StagedParams staged = nn::stage(tape, m);
  nn::adam_step(m, staged, state, 0.1);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    CHECK(mats_equal(m.layers[l].w, before.layers[l].w));
    CHECK(mats_equal(m.layers[l].b, before.layers[l].b));
  }
  CHECK(state.step == 1);
}

TEST_CASE("adam: first step with unit gradient moves by about lr") {
  Mat param = Mat::full(1, 1, 5.0);
  Mat grad = Mat::full(1, 1, 1.0);
  Mat m(1, 1), v(1, 1);
  nn::AdamState state;
  state.step = 1;
  nn::adam_apply(param, grad, m, v, state, 0.1);
  // m_hat = v_hat = 1 at t=1, so the update is lr / (1 + eps)
  CHECK(param(0, 0) == doctest::Approx(5.0 - 0.1).epsilon(1e-6));
  CHECK(grad(0, 0) == 0.0);
}

TEST_CASE("adam: descends a quadratic bowl monotonically") {
  Mat w = Mat::full(1, 1, 1.0);
  Mat grad(1, 1), m(1, 1), v(1, 1);
  nn::AdamState state;
  double prev = w(0, 0) * w(0, 0);
  for (int t = 1; t <= 100; ++t) {
    state.step = t;
    grad(0, 0) = 2.0 * w(0, 0);
    nn::adam_apply(w, grad, m, v, state, 0.01);
    const double f = w(0, 0) * w(0, 0);
    CHECK(f < prev);
    prev = f;
  }
  CHECK(prev < 0.25);
}

TEST_CASE("adam: non-finite gradient raises a divergence error") {
  Mat param(1, 1), m(1, 1), v(1, 1);
  Mat grad = Mat::full(1, 1, std::nan(""));
  nn::AdamState state;
  state.step = 1;
  CHECK_THROWS_AS(nn::adam_apply(param, grad, m, v, state, 0.1), DivergenceError);
}

TEST_CASE("gradients flow through a full forward+backward into every layer") {
  nn::MlpModel model = nn::MlpModel::init(small_config());
  Mat x = random_input(4, 3, 3);
  ad::Tape tape;
  nn::StagedParams staged = nn::stage(tape, model);
  ad::Var out = nn::forward(tape, staged, model.config, tape.leaf(x), nullptr)[0];
  tape.backward(tape.mean(tape.square(out)));
  bool any_nonzero = false;
  for (std::size_t l = 0; l < staged.w.size(); ++l)
    for (double g : staged.w[l].grad().storage())
      if (g != 0.0) any_nonzero = true;
  CHECK(any_nonzero);
}
