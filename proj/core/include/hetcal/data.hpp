#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hetcal/matrix.hpp"

namespace hetcal::data {

// Feature matrix + target vector. After standardize() the stored values are
// z-scored with train-split statistics retained for exact de-standardization.
struct Dataset {
  std::string name;
  Mat x;                       // n x d
  std::vector<double> y;       // n
  std::vector<std::string> column_names;
  std::size_t rows_dropped = 0;  // rows rejected for missing values at ingestion

  bool standardized = false;
  std::vector<double> x_mean, x_std;  // d entries each
  double y_mean = 0.0;
  double y_std = 1.0;

  std::size_t n() const { return y.size(); }
  std::size_t dim() const { return x.cols(); }

  double destandardize_target(double v) const { return v * y_std + y_mean; }
  double destandardize_scale(double s) const { return s * y_std; }
};

struct Split {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;  // |test| = round(0.2 n)
  std::uint64_t seed = 0;
};

// Target column selector: by name, by index, or the last column by default.
struct TargetSpec {
  std::optional<std::string> name;
  std::optional<std::size_t> index;
};

// Headered, comma-separated, numeric CSV. Rows with missing cells (empty, ?,
// NA, nan variants) are dropped and counted; any other unparseable cell is an
// ingestion error naming the row and column. Row order is preserved.
Dataset load_csv(const std::filesystem::path& path, const TargetSpec& target = {});

// Seeded uniform 80/20 shuffle split.
Split make_split(std::size_t n, std::uint64_t seed);

// Z-scores features and target using train-split statistics only; constant
// columns keep their indexing with std clamped to 1.
Dataset standardize(const Dataset& raw, const Split& split);

enum class SynthProfile : std::uint8_t {
  kLinearGauss,    // y = 3x + eps, eps ~ N(0, 0.5^2), x ~ U[-3, 3]
  kSineAbsNoise,   // y = sin x + |x| eps / 3, eps ~ N(0, 1), x ~ U[-3, 3]
  kUniformBand,    // y ~ U[-1, 1], constant unit feature
};

SynthProfile synth_profile_from_name(const std::string& name);
std::string synth_profile_name(SynthProfile p);

struct SynthData {
  Dataset data;                    // raw (not standardized)
  std::vector<double> sigma_true;  // ground-truth noise level per row
};

// noise_scale multiplies the generator's noise (0 gives the noiseless variant).
SynthData synth_heteroscedastic(std::size_t n, SynthProfile profile, std::uint64_t seed,
                                double noise_scale = 1.0);

struct RegistryEntry {
  std::string name;
  std::string file;    // relative to the registry file's directory
  std::string target;  // target column name
  std::size_t expected_rows = 0;  // usable rows after missing-value drops
  std::size_t expected_cols = 0;  // feature count
  std::string source;
  std::string notes;
};

// Manifest of benchmark datasets: where each file lives, its target column,
// and the shape it should have once fetched.
class Registry {
 public:
  static Registry load(const std::filesystem::path& manifest_path);

  const RegistryEntry& resolve(const std::string& name) const;  // DataError if unknown
  const std::vector<RegistryEntry>& entries() const { return entries_; }
  std::filesystem::path file_path(const RegistryEntry& entry) const;

  // Loads a registry dataset; missing file raises DataError with fetch help.
  Dataset open(const std::string& name) const;

 private:
  std::vector<RegistryEntry> entries_;
  std::filesystem::path base_dir_;
};

}  // namespace hetcal::data
