#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hetcal/data.hpp"
#include "hetcal/estimators.hpp"
#include "hetcal/metrics.hpp"
#include "hetcal/prediction.hpp"

namespace hetcal::experiment {

// Full description of a run; serializes to JSON and replays bit-identically.
struct ExperimentConfig {
  std::string dataset;  // registry name, or "synth:<profile>[:<n>]"
  Estimator estimator = Estimator::kDropoutHc;
  estimators::TrainConfig train;
  std::vector<double> levels = {0.1, 0.3, 0.5, 0.7, 0.9, 0.99};
  std::string out_dir = "out";
  std::size_t repeats = 5;
  std::string registry_path = "data/registry.json";
  std::size_t threads = 0;  // 0: one per hardware thread, capped at cell count

  std::string to_json_string() const;
  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

enum class CellErrorKind : std::uint8_t { kNone, kConfig, kData, kDivergence, kOther };

struct CellResult {
  std::string dataset;
  Estimator estimator = Estimator::kMcDropout;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  CellErrorKind error_kind = CellErrorKind::kNone;
  double rmse = 0.0;
  double ce = 0.0;
  double wall_s = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

struct Aggregate {
  std::string dataset;
  Estimator estimator = Estimator::kMcDropout;
  std::size_t repeats = 0;
  double rmse_mean = 0.0, rmse_std = 0.0;
  double ce_mean = 0.0, ce_std = 0.0;
  std::size_t ce_rank = 0;  // 1 = lowest mean CE on its dataset
};

struct BenchmarkReport {
  std::string kind;  // "single" | "benchmark" | "sweep"
  std::vector<CellResult> cells;
  std::vector<Aggregate> aggregates;
  std::string config_json;  // echo of the originating config

  std::string to_json_string() const;
};

// Structural check of a report JSON document against the published schema
// (schemas/report.schema.json); returns an empty string or a description of
// the first violation.
std::string validate_report_json(const std::string& text);

// Seeds are derived per (dataset, estimator, repeat); the split/data seed
// deliberately ignores the estimator so estimators compare on identical
// splits of identical data.
std::uint64_t cell_seed(std::uint64_t base, const std::string& dataset, Estimator est,
                        std::size_t repeat);
std::uint64_t split_seed(std::uint64_t base, const std::string& dataset, std::size_t repeat);

// Resolves a dataset reference (registry name or synth:<profile>[:<n>]) to a
// raw dataset. Synthetic data is regenerated deterministically per repeat.
data::Dataset resolve_dataset(const ExperimentConfig& cfg, const std::string& ref,
                              std::size_t repeat);

// Trains and evaluates one (dataset, estimator, repeat) cell end to end.
CellResult run_cell(const ExperimentConfig& cfg, const std::string& dataset, Estimator est,
                    std::size_t repeat, PredictionSet* out_preds = nullptr,
                    std::vector<estimators::EpochLog>* out_log = nullptr);

// Single experiment: `repeats` derived-seed runs of one estimator on one
// dataset. Writes report.json plus, per repeat, the calibration-curve CSV,
// sigma-histogram CSV (50 bins), predictions CSV, and training-log JSONL.
BenchmarkReport run_single(const ExperimentConfig& cfg);

// Full grid (datasets x estimators x repeats). Cells run on a bounded worker
// pool and share no mutable state; any cell failure is recorded and the grid
// continues. Writes report.json to cfg.out_dir.
BenchmarkReport run_benchmark(const ExperimentConfig& cfg, const std::vector<std::string>& datasets,
                              const std::vector<Estimator>& estimators);

struct SweepRow {
  double rate = 0.0;
  Estimator estimator = Estimator::kMcDropout;
  double ce_mean = 0.0;
  double ce_std = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::string config_json;

  std::string to_csv() const;  // rate,estimator,ce_mean,ce_std
};

// Dropout-rate sweep for the robustness study; estimators default to
// {mc_dropout, dropout_hc}. Writes sweep.csv to cfg.out_dir.
SweepResult sweep_dropout_rate(const ExperimentConfig& cfg, const std::string& dataset,
                               const std::vector<double>& rates,
                               const std::vector<Estimator>& estimators = {
                                   Estimator::kMcDropout, Estimator::kDropoutHc});

// 50 uniform bins over the observed range; header bin_lo,bin_hi,count.
std::string sigma_histogram_csv(const PredictionSet& preds);

// Round-trip helpers for persisted predictions (mu,sigma,y CSV).
std::string predictions_to_csv(const PredictionSet& preds);
PredictionSet predictions_from_csv_file(const std::filesystem::path& path);

}  // namespace hetcal::experiment
