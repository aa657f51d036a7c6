#pragma once

#include <stdexcept>
#include <string>

namespace hetcal {

// Shape mismatch between operands (matmul dims, broadcast, non-scalar root).
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Numerically invalid input: log of non-positive, division by zero,
// non-finite values where finite ones are required, empty reductions.
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid user-supplied configuration (bad tau ordering, zero dims, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dataset ingestion / resolution failure.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a non-finite loss, gradient, or parameter.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long epoch = -1)
      : std::runtime_error(epoch >= 0 ? what + " (epoch " + std::to_string(epoch) + ")" : what),
        epoch_(epoch) {}

  long epoch() const { return epoch_; }

 private:
  long epoch_;
};

}  // namespace hetcal
