// Experiment runner: trains calibrated-uncertainty regressors, sweeps
// benchmark grids, and emits plot-ready CSV/JSON artifacts.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hetcal/data.hpp"
#include "hetcal/errors.hpp"
#include "hetcal/experiment.hpp"
#include "hetcal/metrics.hpp"
#include "hetcal/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct CommonFlags {
  std::string config_file;
  std::string dataset;
  std::string estimator;
  std::string out_dir;
  std::string registry;
  std::string levels;
  std::string hidden;
  std::uint64_t seed = static_cast<std::uint64_t>(-1);
  long repeats = -1;
  long epochs = -1;
  long mc_train = -1;
  long mc_predict = -1;
  long batch_size = -1;
  long threads = -1;
  double dropout_rate = -1.0;
  double tau_u = -1.0;
  double tau_l = -1.0;
  double lambda_h = -1.0;
  double lambda_u = -1.0;
  double lambda_l = -1.0;
  double learning_rate = -1.0;
  double variance_floor = -1.0;
  double grad_clip = -1.0;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "Load a serialized experiment config (JSON)");
  cmd->add_option("--dataset", f.dataset, "Registry dataset name or synth:<profile>[:<n>]");
  cmd->add_option("--estimator", f.estimator, "mc_dropout | hnn | dropout_hc | quantile_hc");
  cmd->add_option("--out-dir", f.out_dir, "Output directory");
  cmd->add_option("--registry", f.registry, "Dataset registry manifest path");
  cmd->add_option("--levels", f.levels, "Comma-separated calibration levels in (0,1)");
  cmd->add_option("--hidden", f.hidden, "Comma-separated hidden layer widths");
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--repeats", f.repeats, "Derived-seed repeats per cell");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--mc-train", f.mc_train, "Monte-Carlo passes per training step");
  cmd->add_option("--mc-predict", f.mc_predict, "Monte-Carlo passes at prediction");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size (n for full batch)");
  cmd->add_option("--threads", f.threads, "Worker threads for grid cells (0 = hardware)");
  cmd->add_option("-p,--dropout-rate", f.dropout_rate, "Dropout rate in [0,1)");
  cmd->add_option("--tau-u", f.tau_u, "Upper quantile level");
  cmd->add_option("--tau-l", f.tau_l, "Lower quantile level");
  cmd->add_option("--lambda-h", f.lambda_h, "Calibration-term weight");
  cmd->add_option("--lambda-u", f.lambda_u, "Upper pinball weight");
  cmd->add_option("--lambda-l", f.lambda_l, "Lower pinball weight");
  cmd->add_option("--lr", f.learning_rate, "Adam learning rate");
  cmd->add_option("--variance-floor", f.variance_floor, "Variance floor for the NLL");
  cmd->add_option("--grad-clip", f.grad_clip, "Global gradient-norm clip (0 disables)");
}

hetcal::experiment::ExperimentConfig build_config(const CommonFlags& f) {
  hetcal::experiment::ExperimentConfig cfg;
  if (!f.config_file.empty()) cfg = hetcal::experiment::ExperimentConfig::load(f.config_file);
  if (!f.dataset.empty()) cfg.dataset = f.dataset;
  if (!f.estimator.empty()) cfg.estimator = hetcal::estimator_from_name(f.estimator);
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (!f.registry.empty()) cfg.registry_path = f.registry;
  if (!f.levels.empty()) {
    cfg.levels.clear();
    for (const std::string& s : split_list(f.levels)) cfg.levels.push_back(std::stod(s));
  }
  if (!f.hidden.empty()) {
    cfg.train.hidden_widths.clear();
    for (const std::string& s : split_list(f.hidden))
      cfg.train.hidden_widths.push_back(std::stoul(s));
  }
  if (f.seed != static_cast<std::uint64_t>(-1)) cfg.train.seed = f.seed;
  if (f.repeats >= 0) cfg.repeats = static_cast<std::size_t>(f.repeats);
  if (f.epochs >= 0) cfg.train.epochs = static_cast<std::size_t>(f.epochs);
  if (f.mc_train >= 0) cfg.train.mc_train = static_cast<std::size_t>(f.mc_train);
  if (f.mc_predict >= 0) cfg.train.mc_predict = static_cast<std::size_t>(f.mc_predict);
  if (f.batch_size >= 0) cfg.train.batch_size = static_cast<std::size_t>(f.batch_size);
  if (f.threads >= 0) cfg.threads = static_cast<std::size_t>(f.threads);
  if (f.dropout_rate >= 0.0) cfg.train.dropout_rate = f.dropout_rate;
  if (f.tau_u >= 0.0) cfg.train.tau_u = f.tau_u;
  if (f.tau_l >= 0.0) cfg.train.tau_l = f.tau_l;
  if (f.lambda_h >= 0.0) cfg.train.weights.lambda_h = f.lambda_h;
  if (f.lambda_u >= 0.0) cfg.train.weights.lambda_u = f.lambda_u;
  if (f.lambda_l >= 0.0) cfg.train.weights.lambda_l = f.lambda_l;
  if (f.learning_rate >= 0.0) cfg.train.learning_rate = f.learning_rate;
  if (f.variance_floor >= 0.0) cfg.train.variance_floor = f.variance_floor;
  if (f.grad_clip >= 0.0) cfg.train.grad_clip_norm = f.grad_clip;
  return cfg;
}

void print_summary(const hetcal::experiment::BenchmarkReport& report) {
  std::printf("%-24s %-12s %8s %10s %10s %6s\n", "dataset", "estimator", "repeats", "rmse", "ce",
              "rank");
  for (const auto& a : report.aggregates) {
    std::printf("%-24s %-12s %8zu %10.4f %10.4f %5zu%s\n", a.dataset.c_str(),
                hetcal::estimator_name(a.estimator).c_str(), a.repeats, a.rmse_mean, a.ce_mean,
                a.ce_rank, a.ce_rank == 1 ? "*" : "");
  }
  for (const auto& c : report.cells)
    if (!c.ok)
      std::printf("FAILED %s/%s repeat %zu: %s\n", c.dataset.c_str(),
                  hetcal::estimator_name(c.estimator).c_str(), c.repeat, c.error.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("hetcal ") + hetcal::kVersion +
               " - calibrated uncertainty estimation benchmark"};
  app.require_subcommand(1);

  CommonFlags f;

  CLI::App* train = app.add_subcommand("train", "Train one estimator on one dataset");
  add_common_flags(train, f);

  CLI::App* bench = app.add_subcommand("bench", "Run the (dataset x estimator) benchmark grid");
  std::string bench_datasets, bench_estimators = "mc_dropout,hnn,dropout_hc,quantile_hc";
  add_common_flags(bench, f);
  bench->add_option("--datasets", bench_datasets, "Comma-separated dataset refs")->required();
  bench->add_option("--estimators", bench_estimators, "Comma-separated estimator tags");

  CLI::App* sweep = app.add_subcommand("sweep-p", "Sweep dropout rates and record CE per rate");
  std::string sweep_rates = "0.05,0.1,0.2,0.3,0.4,0.5";
  std::string sweep_estimators = "mc_dropout,dropout_hc";
  add_common_flags(sweep, f);
  sweep->add_option("--rates", sweep_rates, "Comma-separated dropout rates in (0,1)");
  sweep->add_option("--estimators", sweep_estimators, "Estimators to sweep");

  CLI::App* curve = app.add_subcommand("curve", "Calibration curve CSV from saved predictions");
  std::string curve_in, curve_out = "curve.csv", curve_levels;
  curve->add_option("--predictions", curve_in, "Predictions CSV (mu,sigma,y)")->required();
  curve->add_option("--out", curve_out, "Output CSV path");
  curve->add_option("--levels", curve_levels, "Comma-separated calibration levels");

  CLI::App* datasets = app.add_subcommand("datasets", "Check the dataset registry");
  std::string reg_path = "data/registry.json";
  datasets->add_option("--registry", reg_path, "Registry manifest path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      hetcal::experiment::ExperimentConfig cfg = build_config(f);
      if (cfg.dataset.empty()) throw hetcal::ConfigError("--dataset (or --config) is required");
      hetcal::experiment::BenchmarkReport report = hetcal::experiment::run_single(cfg);
      print_summary(report);
      std::printf("wrote %s/report.json\n", cfg.out_dir.c_str());
    } else if (bench->parsed()) {
      hetcal::experiment::ExperimentConfig cfg = build_config(f);
      std::vector<hetcal::Estimator> ests;
      for (const std::string& e : split_list(bench_estimators))
        ests.push_back(hetcal::estimator_from_name(e));
      hetcal::experiment::BenchmarkReport report =
          hetcal::experiment::run_benchmark(cfg, split_list(bench_datasets), ests);
      print_summary(report);
      std::printf("wrote %s/report.json\n", cfg.out_dir.c_str());
    } else if (sweep->parsed()) {
      hetcal::experiment::ExperimentConfig cfg = build_config(f);
      if (cfg.dataset.empty()) throw hetcal::ConfigError("--dataset (or --config) is required");
      std::vector<double> rates;
      for (const std::string& r : split_list(sweep_rates)) rates.push_back(std::stod(r));
      std::vector<hetcal::Estimator> ests;
      for (const std::string& e : split_list(sweep_estimators))
        ests.push_back(hetcal::estimator_from_name(e));
      hetcal::experiment::SweepResult res =
          hetcal::experiment::sweep_dropout_rate(cfg, cfg.dataset, rates, ests);
      std::printf("%s", res.to_csv().c_str());
      std::printf("wrote %s/sweep.csv\n", cfg.out_dir.c_str());
    } else if (curve->parsed()) {
      hetcal::PredictionSet preds = hetcal::experiment::predictions_from_csv_file(curve_in);
      hetcal::metrics::CalibrationLevels levels;
      if (!curve_levels.empty()) {
        levels.levels.clear();
        for (const std::string& s : split_list(curve_levels)) levels.levels.push_back(std::stod(s));
      }
      hetcal::metrics::CalibrationResult cal = hetcal::metrics::calibration_error(preds, levels);
      std::ofstream out(curve_out);
      if (!out) throw hetcal::DataError("cannot write " + curve_out);
      cal.curve.write_csv(out);
      std::printf("ce=%.6f, wrote %s\n", cal.ce, curve_out.c_str());
    } else if (datasets->parsed()) {
      hetcal::data::Registry reg = hetcal::data::Registry::load(reg_path);
      std::printf("%-18s %-9s %8s %6s  %s\n", "name", "status", "rows", "cols", "file");
      for (const auto& e : reg.entries()) {
        const std::filesystem::path p = reg.file_path(e);
        if (!std::filesystem::exists(p)) {
          std::printf("%-18s %-9s %8zu %6zu  %s (fetch: tools/fetch_datasets.py; source %s)\n",
                      e.name.c_str(), "MISSING", e.expected_rows, e.expected_cols,
                      p.string().c_str(), e.source.c_str());
          continue;
        }
        try {
          hetcal::data::Dataset ds = reg.open(e.name);
          const bool match = ds.n() == e.expected_rows && ds.dim() == e.expected_cols;
          std::string extra;
          if (ds.rows_dropped > 0)
            extra = " (" + std::to_string(ds.rows_dropped) + " rows dropped for missing values)";
          std::printf("%-18s %-9s %8zu %6zu  %s%s\n", e.name.c_str(), match ? "ok" : "MISMATCH",
                      ds.n(), ds.dim(), p.string().c_str(), extra.c_str());
        } catch (const std::exception& ex) {
          std::printf("%-18s %-9s %8s %6s  %s\n", e.name.c_str(), "ERROR", "-", "-", ex.what());
        }
      }
    }
  } catch (const hetcal::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kExitConfig;
  } catch (const hetcal::DivergenceError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kExitDivergence;
  } catch (const hetcal::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
