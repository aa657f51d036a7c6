#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "hetcal/errors.hpp"
#include "hetcal/metrics.hpp"
#include "hetcal/rng.hpp"
#include "support/stats.hpp"

using namespace hetcal;

namespace {

PredictionSet make_preds(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PredictionSet p;
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = rng.uniform(-5.0, 5.0);
    const double sigma = rng.uniform(0.1, 2.0);
    p.mu.push_back(mu);
    p.sigma.push_back(sigma);
    p.y.push_back(mu + sigma * rng.normal());
  }
  return p;
}

}  // namespace

TEST_CASE("z_score matches the two-sided normal quantile") {
  CHECK(metrics::z_score(0.95) == doctest::Approx(1.96).epsilon(0.005 / 1.96));
  CHECK(metrics::z_score(0.5) == doctest::Approx(0.6745).epsilon(1e-3 / 0.6745));
  CHECK(metrics::z_score(1e-12) == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
  CHECK_THROWS_AS(metrics::z_score(0.0), DomainError);
  CHECK_THROWS_AS(metrics::z_score(1.0), DomainError);
  CHECK_THROWS_AS(metrics::z_score(-0.3), DomainError);
}

TEST_CASE("z_score absolute error stays under 1e-8 against the bisection oracle") {
  for (double alpha = 0.005; alpha < 0.9995; alpha += 0.007) {
    const double want = testing::inverse_normal_bisect((1.0 + alpha) / 2.0);
    CHECK(std::abs(metrics::z_score(alpha) - want) < 1e-8);
  }
  // deep tails of the underlying inverse CDF
  for (double alpha : {0.999, 0.9999, 0.99999}) {
    const double want = testing::inverse_normal_bisect((1.0 + alpha) / 2.0);
    CHECK(std::abs(metrics::z_score(alpha) - want) < 1e-8);
  }
}

TEST_CASE("build_interval hand values") {
  auto [lo, hi] = metrics::build_interval(0.0, 1.0, 0.95);
  CHECK(lo == doctest::Approx(-1.96).epsilon(0.005));
  CHECK(hi == doctest::Approx(1.96).epsilon(0.005));

  auto [l0, h0] = metrics::build_interval(3.5, 0.0, 0.7);
  CHECK(l0 == 3.5);
  CHECK(h0 == 3.5);

  const double z = testing::inverse_normal_bisect(0.75);
  auto [l5, h5] = metrics::build_interval(5.0, 2.0, 0.5);
  CHECK(l5 == doctest::Approx(5.0 - 2.0 * z).epsilon(1e-6));
  CHECK(h5 == doctest::Approx(5.0 + 2.0 * z).epsilon(1e-6));
  CHECK(l5 == doctest::Approx(3.651).epsilon(1e-3));
  CHECK(h5 == doctest::Approx(6.349).epsilon(1e-3));

  CHECK_THROWS_AS(metrics::build_interval(0.0, -1.0, 0.5), DomainError);
}

TEST_CASE("calibration error degenerate coverage values") {
  metrics::CalibrationLevels levels;
  PredictionSet full;  // y always equals mu: every interval covers, even at sigma 0
  Rng rng(3);
  for (int i = 0; i < 40; ++i) {
    const double mu = rng.normal();
    full.mu.push_back(mu);
    full.y.push_back(mu);
    full.sigma.push_back(i % 2 ? 0.0 : rng.uniform(0.0, 2.0));
  }
  metrics::CalibrationResult r1 = metrics::calibration_error(full, levels);
  CHECK(r1.ce == doctest::Approx(2.51).epsilon(1e-12));
  for (const auto& pt : r1.curve.points) CHECK(pt.achieved == 1.0);

  PredictionSet none;  // sigma 0 and y != mu: zero-width intervals never cover
  for (int i = 0; i < 40; ++i) {
    none.mu.push_back(static_cast<double>(i));
    none.y.push_back(static_cast<double>(i) + 1.0);
    none.sigma.push_back(0.0);
  }
  metrics::CalibrationResult r2 = metrics::calibration_error(none, levels);
  CHECK(r2.ce == doctest::Approx(3.49).epsilon(1e-12));
  for (const auto& pt : r2.curve.points) CHECK(pt.achieved == 0.0);

  PredictionSet empty;
  CHECK_THROWS_AS(metrics::calibration_error(empty, levels), DomainError);
}

TEST_CASE("perfectly calibrated Gaussian predictions give near-zero CE") {
  PredictionSet p = make_preds(100000, 2024);
  metrics::CalibrationLevels levels;
  metrics::CalibrationResult r = metrics::calibration_error(p, levels);
  CHECK(r.ce < 0.05);
  CHECK(r.curve.points.size() == levels.levels.size());
}

TEST_CASE("CE stays within its arithmetic bounds") {
  metrics::CalibrationLevels levels;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PredictionSet p = make_preds(200, seed);
    const double ce = metrics::calibration_error(p, levels).ce;
    CHECK(ce >= 0.0);
    CHECK(ce <= 4.69 + 1e-12);
  }
}

TEST_CASE("inflating sigma never reduces coverage at any level") {
  metrics::CalibrationLevels levels;
  PredictionSet p = make_preds(500, 77);
  metrics::CalibrationResult base = metrics::calibration_error(p, levels);
  for (double c : {1.2, 2.0, 5.0}) {
    PredictionSet wide = p;
    for (double& s : wide.sigma) s *= c;
    metrics::CalibrationResult r = metrics::calibration_error(wide, levels);
    for (std::size_t i = 0; i < levels.levels.size(); ++i)
      CHECK(r.curve.points[i].achieved >= base.curve.points[i].achieved);
  }
}

TEST_CASE("CE is invariant under joint affine transforms") {
  metrics::CalibrationLevels levels;
  PredictionSet p = make_preds(500, 123);
  const double base = metrics::calibration_error(p, levels).ce;
  for (auto [a, b] : {std::pair{2.5, -7.0}, std::pair{-3.0, 11.0}, std::pair{0.02, 0.0}}) {
    PredictionSet t = p;
    for (std::size_t i = 0; i < t.size(); ++i) {
      t.mu[i] = a * p.mu[i] + b;
      t.y[i] = a * p.y[i] + b;
      t.sigma[i] = std::abs(a) * p.sigma[i];
    }
    CHECK(metrics::calibration_error(t, levels).ce == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("calibration curve is monotone in the level when every sigma is positive") {
  metrics::CalibrationLevels levels;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PredictionSet p = make_preds(300, 1000 + seed);
    metrics::CalibrationResult r = metrics::calibration_error(p, levels);
    for (std::size_t i = 1; i < r.curve.points.size(); ++i)
      CHECK(r.curve.points[i].achieved >= r.curve.points[i - 1].achieved);
  }
}

TEST_CASE("curve CSV has a header and one row per level") {
  PredictionSet p = make_preds(50, 5);
  metrics::CalibrationLevels levels;
  metrics::CalibrationResult r = metrics::calibration_error(p, levels);
  std::ostringstream out;
  r.curve.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "expected,achieved");
  std::size_t rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == levels.levels.size());
}

TEST_CASE("rmse hand values and oracle agreement") {
  PredictionSet p;
  p.mu = {1.0, 2.0};
  p.y = {1.0, 2.0};
  p.sigma = {0.1, 0.2};
  CHECK(metrics::rmse(p) == 0.0);

  p.mu = {3.0, 4.0};
  p.y = {0.0, 0.0};
  CHECK(metrics::rmse(p) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));

  PredictionSet r = make_preds(1000, 9);
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i)
    acc += (r.y[i] - r.mu[i]) * (r.y[i] - r.mu[i]);
  const double naive = std::sqrt(acc / static_cast<double>(r.size()));
  CHECK(metrics::rmse(r) == doctest::Approx(naive).epsilon(1e-12));

  PredictionSet empty;
  CHECK_THROWS_AS(metrics::rmse(empty), DomainError);
}

TEST_CASE("level sets validate") {
  metrics::CalibrationLevels bad;
  bad.levels = {0.5, 0.3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.levels = {0.0, 0.5};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.levels = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.levels = {0.1, 0.5, 0.99};
  CHECK_NOTHROW(bad.validate());
}

TEST_CASE("prediction set invariants are enforced") {
  PredictionSet p;
  p.mu = {1.0};
  p.sigma = {-0.5};
  p.y = {1.0};
  CHECK_THROWS_AS(p.validate(), DomainError);
  p.sigma = {0.5, 0.1};
  CHECK_THROWS_AS(p.validate(), DomainError);
  p.sigma = {std::nan("")};
  CHECK_THROWS_AS(p.validate(), DomainError);
}
