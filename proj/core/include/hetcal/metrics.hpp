#pragma once

#include <ostream>
#include <utility>
#include <vector>

#include "hetcal/prediction.hpp"

namespace hetcal::metrics {

// Calibration levels alpha at which interval coverage is evaluated.
struct CalibrationLevels {
  std::vector<double> levels = {0.1, 0.3, 0.5, 0.7, 0.9, 0.99};

  void validate() const;  // strictly increasing, each in (0, 1)
};

struct CalibrationPoint {
  double expected = 0.0;  // alpha
  double achieved = 0.0;  // empirical coverage
};

struct CalibrationCurve {
  std::vector<CalibrationPoint> points;

  // Two-column CSV: expected,achieved with one row per level.
  void write_csv(std::ostream& out) const;
};

struct CalibrationResult {
  double ce = 0.0;
  CalibrationCurve curve;
};

// Two-sided z multiplier for a central interval at level alpha in (0, 1):
// the inverse standard-normal CDF at (1 + alpha) / 2. Rational approximation
// plus one Halley refinement; absolute error well under 1e-8.
double z_score(double alpha);

// Central prediction interval [mu - z sigma, mu + z sigma].
std::pair<double, double> build_interval(double mu, double sigma, double alpha);

// Calibration error: sum over levels of |alpha - empirical coverage|, with
// coverage counting y inside the closed interval at both endpoints. Also
// returns the expected-vs-achieved curve.
CalibrationResult calibration_error(const PredictionSet& preds, const CalibrationLevels& levels);

// Root mean squared error of the mean predictions, in target units.
double rmse(const PredictionSet& preds);

}  // namespace hetcal::metrics
