#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hetcal/errors.hpp"
#include "hetcal/objectives.hpp"
#include "hetcal/rng.hpp"
#include "support/finite_diff.hpp"
#include "support/stats.hpp"

using namespace hetcal;

namespace {

constexpr double kFloor = 1e-6;

double nll_value(double y, double mu, double sigma_sq) {
  ad::Tape tape;
  Mat ym = Mat::full(1, 1, y);
  return objectives::gaussian_nll(tape, ym, tape.leaf_scalar(mu), tape.leaf_scalar(sigma_sq),
                                  kFloor)
      .value()(0, 0);
}

double pinball_value(double y, double y_hat, double tau) {
  ad::Tape tape;
  Mat ym = Mat::full(1, 1, y);
  return objectives::pinball(tape, ym, tape.leaf_scalar(y_hat), tau).value()(0, 0);
}

Mat random_col(std::size_t n, Rng& rng, double scale = 1.0) {
  Mat m(n, 1);
  for (double& v : m.storage()) v = scale * rng.normal();
  return m;
}

}  // namespace

TEST_CASE("gaussian_nll hand values") {
  CHECK(nll_value(1.0, 1.0, 1.0) == 0.0);
  CHECK(nll_value(2.0, 0.0, 1.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(nll_value(0.0, 0.0, std::exp(1.0)) == doctest::Approx(0.5).epsilon(1e-14));
  // may be negative for small variances
  CHECK(nll_value(0.0, 0.0, 0.01) < 0.0);
}

TEST_CASE("gaussian_nll input validation") {
  ad::Tape tape;
  Mat y = Mat::full(2, 1, 1.0);
  CHECK_THROWS_AS(
      objectives::gaussian_nll(tape, y, tape.leaf(Mat::full(2, 1, 1.0)),
                               tape.leaf(Mat::full(2, 1, 1.0)), 0.0),
      ConfigError);
  CHECK_THROWS_AS(
      objectives::gaussian_nll(tape, y, tape.leaf(Mat::full(2, 1, std::nan(""))),
                               tape.leaf(Mat::full(2, 1, 1.0)), kFloor),
      DomainError);
  CHECK_THROWS_AS(
      objectives::gaussian_nll(tape, y, tape.leaf(Mat::full(2, 1, 1.0)),
                               tape.leaf(Mat::full(2, 1, -0.1)), kFloor),
      DomainError);
  Mat empty(0, 1);
  CHECK_THROWS_AS(
      objectives::gaussian_nll(tape, empty, tape.leaf(empty), tape.leaf(empty), kFloor),
      DomainError);
}

TEST_CASE("gaussian_nll is minimized in sigma^2 at the squared residual") {
  Rng rng(31);
  for (int rep = 0; rep < 50; ++rep) {
    const double r = rng.uniform(0.05, 3.0);
    const double y = rng.normal();
    const double mu = y - r;
    auto f = [&](double s) { return nll_value(y, mu, s); };
    const double s_star = testing::golden_section_min(f, 1e-6, 25.0, 300);
    CHECK(s_star == doctest::Approx(r * r).epsilon(1e-3));
  }
}

TEST_CASE("gaussian_nll gradients match finite differences") {
  Rng rng(8);
  const std::size_t n = 6;
  Mat y = random_col(n, rng);
  Mat mu = random_col(n, rng);
  Mat sig(n, 1);
  for (double& v : sig.storage()) v = rng.uniform(0.2, 2.0);

  ad::Tape tape;
  ad::Var lmu = tape.leaf(mu);
  ad::Var lsig = tape.leaf(sig);
  tape.backward(objectives::gaussian_nll(tape, y, lmu, lsig, kFloor));

  std::vector<std::pair<double*, double>> entries;
  for (std::size_t i = 0; i < n; ++i) {
    entries.push_back({&mu.storage()[i], lmu.grad().storage()[i]});
    entries.push_back({&sig.storage()[i], lsig.grad().storage()[i]});
  }
  auto eval = [&] {
    ad::Tape t;
    return objectives::gaussian_nll(t, y, t.leaf(mu), t.leaf(sig), kFloor).value()(0, 0);
  };
  auto res = testing::check_gradients(eval, entries, 1e-4, 1e-5);
  CHECK(res.ok);
  CHECK(res.kink_skipped == 0);
}

TEST_CASE("pinball hand values") {
  CHECK(pinball_value(1.0, 0.0, 0.9) == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(pinball_value(0.0, 1.0, 0.9) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(pinball_value(5.0, 5.0, 0.37) == 0.0);

  Rng rng(14);
  for (int i = 0; i < 20; ++i) {
    const double y = rng.normal(), yh = rng.normal();
    CHECK(pinball_value(y, yh, 0.5) == doctest::Approx(0.5 * std::abs(y - yh)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(pinball_value(0.0, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(pinball_value(0.0, 0.0, 1.0), ConfigError);
}

TEST_CASE("pinball gradient is zero exactly at y == y_hat") {
  ad::Tape tape;
  Mat y = Mat::full(1, 1, 2.0);
  ad::Var yh = tape.leaf_scalar(2.0);
  ad::Var loss = objectives::pinball(tape, y, yh, 0.9);
  CHECK(loss.value()(0, 0) == 0.0);
  tape.backward(loss);
  CHECK(yh.grad()(0, 0) == 0.0);
}

TEST_CASE("pinball at tau and 1-tau sums to the absolute error") {
  Rng rng(25);
  for (int i = 0; i < 30; ++i) {
    const double y = rng.normal(), yh = rng.normal();
    const double tau = rng.uniform(0.05, 0.95);
    CHECK(pinball_value(y, yh, tau) + pinball_value(y, yh, 1.0 - tau) ==
          doctest::Approx(std::abs(y - yh)).epsilon(1e-12));
  }
}

TEST_CASE("constant predictor minimizing mean pinball lands on the empirical quantile") {
  Mat y(100, 1);
  std::vector<double> sample;
  for (int i = 0; i < 100; ++i) {
    y(i, 0) = static_cast<double>(i + 1);
    sample.push_back(static_cast<double>(i + 1));
  }
  auto mean_pinball = [&](double c) {
    ad::Tape t;
    return objectives::pinball(t, y, t.leaf(Mat::full(100, 1, c)), 0.9).value()(0, 0);
  };
  double best = 1e300;
  for (int i = 1; i <= 100; ++i) best = std::min(best, mean_pinball(static_cast<double>(i)));
  // tau*n = 90 is integral, so the objective is flat on [y_(90), y_(91)]; the
  // empirical quantile y_(90) = 90 attains the minimum.
  const double q = testing::empirical_quantile(sample, 0.9);
  CHECK(q == 90.0);
  CHECK(mean_pinball(q) == doctest::Approx(best).epsilon(1e-12));

  // non-integral tau*n: the minimizer is unique and equals the quantile
  Mat y2(101, 1);
  std::vector<double> sample2;
  for (int i = 0; i < 101; ++i) {
    y2(i, 0) = static_cast<double>(i + 1);
    sample2.push_back(static_cast<double>(i + 1));
  }
  auto mean_pinball2 = [&](double c) {
    ad::Tape t;
    return objectives::pinball(t, y2, t.leaf(Mat::full(101, 1, c)), 0.9).value()(0, 0);
  };
  double best_c2 = 0.0, best2 = 1e300;
  for (int i = 1; i <= 101; ++i) {
    const double v = mean_pinball2(static_cast<double>(i));
    if (v < best2) {
      best2 = v;
      best_c2 = static_cast<double>(i);
    }
  }
  CHECK(best_c2 == testing::empirical_quantile(sample2, 0.9));
  CHECK(best_c2 == 91.0);
}

TEST_CASE("pinball and mse are non-negative") {
  Rng rng(44);
  for (int i = 0; i < 25; ++i) {
    ad::Tape tape;
    Mat y = random_col(8, rng);
    Mat pred_m = random_col(8, rng);
    ad::Var pred = tape.leaf(pred_m);
    CHECK(objectives::pinball(tape, y, pred, rng.uniform(0.1, 0.9)).value()(0, 0) >= 0.0);
    CHECK(objectives::mse(tape, y, pred).value()(0, 0) >= 0.0);
  }
}

TEST_CASE("quantile_hc composite hand value at the defaults") {
  ad::Tape tape;
  Mat y = Mat::full(1, 1, 0.0);
  objectives::LossWeights w;  // 0.75 / 1.0 / 1.0
  ad::Var loss =
      objectives::quantile_hc_loss(tape, y, tape.leaf_scalar(0.0), tape.leaf_scalar(1.0),
                                   tape.leaf_scalar(-1.0), 0.9, 0.1, w, kFloor);
  // sigma = 1 so the NLL term vanishes; each pinball term contributes 0.1
  CHECK(loss.value()(0, 0) == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("quantile_hc with lambda_h = 0 equals the pinball sum exactly") {
  Rng rng(52);
  for (int i = 0; i < 10; ++i) {
    Mat y = random_col(7, rng);
    Mat mu = random_col(7, rng);
    Mat yu = random_col(7, rng);
    Mat yl = random_col(7, rng);
    objectives::LossWeights w{0.0, 1.0, 1.0};
    ad::Tape tape;
    ad::Var composite = objectives::quantile_hc_loss(
        tape, y, tape.leaf(mu), tape.leaf(yu), tape.leaf(yl), 0.9, 0.1, w, kFloor);
    ad::Tape t2;
    const double pin_sum = objectives::pinball(t2, y, t2.leaf(yu), 0.9).value()(0, 0) +
                           objectives::pinball(t2, y, t2.leaf(yl), 0.1).value()(0, 0);
    CHECK(composite.value()(0, 0) == pin_sum);
  }
}

TEST_CASE("crossed or equal quantiles stay finite through the sigma floor") {
  ad::Tape tape;
  Mat y = Mat::full(1, 1, 0.3);
  objectives::LossWeights w;
  ad::Var same = objectives::quantile_hc_loss(tape, y, tape.leaf_scalar(0.0),
                                              tape.leaf_scalar(0.5), tape.leaf_scalar(0.5), 0.9,
                                              0.1, w, kFloor);
  CHECK(std::isfinite(same.value()(0, 0)));
  ad::Var crossed = objectives::quantile_hc_loss(tape, y, tape.leaf_scalar(0.0),
                                                 tape.leaf_scalar(-0.5), tape.leaf_scalar(0.5),
                                                 0.9, 0.1, w, kFloor);
  CHECK(std::isfinite(crossed.value()(0, 0)));
  CHECK_THROWS_AS(objectives::quantile_hc_loss(tape, y, tape.leaf_scalar(0.0),
                                               tape.leaf_scalar(1.0), tape.leaf_scalar(-1.0), 0.1,
                                               0.9, w, kFloor),
                  ConfigError);
}

TEST_CASE("quantile_hc gradients match finite differences away from kinks") {
  Rng rng(66);
  const std::size_t n = 5;
  Mat y = random_col(n, rng);
  Mat mu = random_col(n, rng);
  Mat yu(n, 1), yl(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    yu(i, 0) = y(i, 0) + rng.uniform(0.5, 1.5);
    yl(i, 0) = y(i, 0) - rng.uniform(0.5, 1.5);
  }
  objectives::LossWeights w;

  ad::Tape tape;
  ad::Var lmu = tape.leaf(mu), lyu = tape.leaf(yu), lyl = tape.leaf(yl);
  tape.backward(objectives::quantile_hc_loss(tape, y, lmu, lyu, lyl, 0.9, 0.1, w, kFloor));

  std::vector<std::pair<double*, double>> entries;
  for (std::size_t i = 0; i < n; ++i) {
    entries.push_back({&mu.storage()[i], lmu.grad().storage()[i]});
    entries.push_back({&yu.storage()[i], lyu.grad().storage()[i]});
    entries.push_back({&yl.storage()[i], lyl.grad().storage()[i]});
  }
  auto eval = [&] {
    ad::Tape t;
    return objectives::quantile_hc_loss(t, y, t.leaf(mu), t.leaf(yu), t.leaf(yl), 0.9, 0.1, w,
                                        kFloor)
        .value()(0, 0);
  };
  auto res = testing::check_gradients(eval, entries, 1e-4, 1e-5);
  CHECK(res.ok);
}

TEST_CASE("detached sigma stops gradients into the quantile heads from the NLL term") {
  Mat y = Mat::full(1, 1, 0.0);
  objectives::LossWeights w{1.0, 0.0, 0.0};  // isolate the NLL term
  ad::Tape tape;
  ad::Var yu = tape.leaf_scalar(1.0), yl = tape.leaf_scalar(-1.0);
  tape.backward(objectives::quantile_hc_loss(tape, y, tape.leaf_scalar(0.5), yu, yl, 0.9, 0.1, w,
                                             kFloor, /*detach_sigma=*/true));
  CHECK(yu.grad()(0, 0) == 0.0);
  CHECK(yl.grad()(0, 0) == 0.0);

  ad::Tape t2;
  ad::Var yu2 = t2.leaf_scalar(1.0), yl2 = t2.leaf_scalar(-1.0);
  t2.backward(objectives::quantile_hc_loss(t2, y, t2.leaf_scalar(0.5), yu2, yl2, 0.9, 0.1, w,
                                           kFloor, /*detach_sigma=*/false));
  CHECK(yu2.grad()(0, 0) != 0.0);
}

TEST_CASE("mse hand values and analytic gradient") {
  ad::Tape tape;
  Mat y(2, 1);
  y(1, 0) = 2.0;
  ad::Var mu = tape.leaf(Mat(2, 1));
  ad::Var loss = objectives::mse(tape, y, mu);
  CHECK(loss.value()(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  tape.backward(loss);
  // d mean((mu - y)^2) / d mu_i = 2 (mu_i - y_i) / n
  CHECK(mu.grad()(0, 0) == doctest::Approx(0.0));
  CHECK(mu.grad()(1, 0) == doctest::Approx(2.0 * (0.0 - 2.0) / 2.0).epsilon(1e-12));

  Rng rng(71);
  Mat yr = random_col(9, rng);
  Mat mur = random_col(9, rng);
  ad::Tape t2;
  ad::Var lmu = t2.leaf(mur);
  t2.backward(objectives::mse(t2, yr, lmu));
  std::vector<std::pair<double*, double>> entries;
  for (std::size_t i = 0; i < 9; ++i)
    entries.push_back({&mur.storage()[i], lmu.grad().storage()[i]});
  auto eval = [&] {
    ad::Tape t;
    return objectives::mse(t, yr, t.leaf(mur)).value()(0, 0);
  };
  CHECK(testing::check_gradients(eval, entries, 1e-4, 1e-5).ok);
}

TEST_CASE("loss weights validate") {
  objectives::LossWeights w{-0.1, 1.0, 1.0};
  CHECK_THROWS_AS(w.validate(), ConfigError);
}
