#include "hetcal/prediction.hpp"

#include <cmath>

#include "hetcal/errors.hpp"

namespace hetcal {

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::kMcDropout: return "mc_dropout";
    case Estimator::kHnn: return "hnn";
    case Estimator::kDropoutHc: return "dropout_hc";
    case Estimator::kQuantileHc: return "quantile_hc";
  }
  return "?";
}

Estimator estimator_from_name(const std::string& name) {
  if (name == "mc_dropout") return Estimator::kMcDropout;
  if (name == "hnn") return Estimator::kHnn;
  if (name == "dropout_hc") return Estimator::kDropoutHc;
  if (name == "quantile_hc") return Estimator::kQuantileHc;
  throw ConfigError("unknown estimator '" + name +
                    "' (expected mc_dropout, hnn, dropout_hc, or quantile_hc)");
}

void PredictionSet::validate() const {
  if (sigma.size() != mu.size() || y.size() != mu.size())
    throw DomainError("prediction set column lengths differ");
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!std::isfinite(mu[i]) || !std::isfinite(sigma[i]) || !std::isfinite(y[i]))
      throw DomainError("non-finite prediction set entry");
    if (sigma[i] < 0.0) throw DomainError("negative sigma in prediction set");
  }
}

}  // namespace hetcal
