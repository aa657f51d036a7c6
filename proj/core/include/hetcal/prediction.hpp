#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hetcal {

enum class Estimator : std::uint8_t {
  kMcDropout,
  kHnn,
  kDropoutHc,
  kQuantileHc,
};

std::string estimator_name(Estimator e);
Estimator estimator_from_name(const std::string& name);

// Per-sample (mu, sigma, y) triples produced by an estimator on a data split,
// in original target units. sigma >= 0 for every row.
struct PredictionSet {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> y;
  Estimator tag = Estimator::kMcDropout;

  std::size_t size() const { return mu.size(); }
  void validate() const;  // throws DomainError on broken invariants
};

}  // namespace hetcal
