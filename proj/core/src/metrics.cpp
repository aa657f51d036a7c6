#include "hetcal/metrics.hpp"

#include <cmath>

#include "hetcal/errors.hpp"

namespace hetcal::metrics {

void CalibrationLevels::validate() const {
  if (levels.empty()) throw ConfigError("calibration level set is empty");
  double prev = 0.0;
  for (double a : levels) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("calibration levels must lie in (0, 1)");
    if (!(a > prev)) throw ConfigError("calibration levels must be strictly increasing");
    prev = a;
  }
}

void CalibrationCurve::write_csv(std::ostream& out) const {
  out << "expected,achieved\n";
  char buf[64];
  for (const CalibrationPoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.expected, p.achieved);
    out << buf;
  }
}

namespace {

// Acklam's rational approximation to the inverse standard-normal CDF
// (|relative error| < 1.15e-9 on its own), refined below.
double inverse_normal_cdf(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  constexpr double p_high = 1.0 - p_low;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= p_high) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // One Halley step against the exact CDF brings the error to ~1e-15.
  const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
  const double e = cdf - p;
  const double u = e * std::sqrt(2.0 * 3.141592653589793238462643383280) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

}  // namespace

double z_score(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("calibration level must lie in (0, 1)");
  return inverse_normal_cdf((1.0 + alpha) / 2.0);
}

std::pair<double, double> build_interval(double mu, double sigma, double alpha) {
  if (sigma < 0.0) throw DomainError("negative sigma in build_interval");
  const double z = z_score(alpha);
  return {mu - z * sigma, mu + z * sigma};
}

CalibrationResult calibration_error(const PredictionSet& preds, const CalibrationLevels& levels) {
  levels.validate();
  preds.validate();
  const std::size_t n = preds.size();
  if (n == 0) throw DomainError("calibration_error on empty prediction set");

  CalibrationResult res;
  for (double alpha : levels.levels) {
    const double z = z_score(alpha);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double half = z * preds.sigma[i];
      if (preds.y[i] >= preds.mu[i] - half && preds.y[i] <= preds.mu[i] + half) ++hits;
    }
    const double coverage = static_cast<double>(hits) / static_cast<double>(n);
    res.curve.points.push_back({alpha, coverage});
    res.ce += std::abs(alpha - coverage);
  }
  return res;
}

double rmse(const PredictionSet& preds) {
  preds.validate();
  const std::size_t n = preds.size();
  if (n == 0) throw DomainError("rmse on empty prediction set");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = preds.y[i] - preds.mu[i];
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace hetcal::metrics
