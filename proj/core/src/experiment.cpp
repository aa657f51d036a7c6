#include "hetcal/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "hetcal/errors.hpp"
#include "hetcal/rng.hpp"
#include "hetcal/version.hpp"

namespace hetcal::experiment {

using nlohmann::json;

namespace {

json train_config_to_json(const estimators::TrainConfig& t) {
  return json{{"epochs", t.epochs},
              {"mc_train", t.mc_train},
              {"mc_predict", t.mc_predict},
              {"dropout_rate", t.dropout_rate},
              {"tau_u", t.tau_u},
              {"tau_l", t.tau_l},
              {"lambda_h", t.weights.lambda_h},
              {"lambda_u", t.weights.lambda_u},
              {"lambda_l", t.weights.lambda_l},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"seed", t.seed},
              {"variance_floor", t.variance_floor},
              {"hidden_widths", t.hidden_widths},
              {"grad_clip_norm", t.grad_clip_norm},
              {"stop_grad_sigma", t.stop_grad_sigma},
              {"unbiased_variance", t.unbiased_variance},
              {"dropout_in_deterministic", t.dropout_in_deterministic}};
}

estimators::TrainConfig train_config_from_json(const json& j) {
  estimators::TrainConfig t;
  t.epochs = j.at("epochs").get<std::size_t>();
  t.mc_train = j.at("mc_train").get<std::size_t>();
  t.mc_predict = j.at("mc_predict").get<std::size_t>();
  t.dropout_rate = j.at("dropout_rate").get<double>();
  t.tau_u = j.at("tau_u").get<double>();
  t.tau_l = j.at("tau_l").get<double>();
  t.weights.lambda_h = j.at("lambda_h").get<double>();
  t.weights.lambda_u = j.at("lambda_u").get<double>();
  t.weights.lambda_l = j.at("lambda_l").get<double>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.learning_rate = j.at("learning_rate").get<double>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.variance_floor = j.at("variance_floor").get<double>();
  t.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
  t.grad_clip_norm = j.value("grad_clip_norm", 10.0);
  t.stop_grad_sigma = j.value("stop_grad_sigma", false);
  t.unbiased_variance = j.value("unbiased_variance", false);
  t.dropout_in_deterministic = j.value("dropout_in_deterministic", false);
  return t;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["artifact"] = kArtifactName;
  j["version"] = kVersion;
  j["dataset"] = dataset;
  j["estimator"] = estimator_name(estimator);
  j["train"] = train_config_to_json(train);
  j["levels"] = levels;
  j["out_dir"] = out_dir;
  j["repeats"] = repeats;
  j["registry_path"] = registry_path;
  j["threads"] = threads;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  ExperimentConfig c;
  c.dataset = j.at("dataset").get<std::string>();
  c.estimator = estimator_from_name(j.at("estimator").get<std::string>());
  c.train = train_config_from_json(j.at("train"));
  c.levels = j.at("levels").get<std::vector<double>>();
  c.out_dir = j.value("out_dir", "out");
  c.repeats = j.at("repeats").get<std::size_t>();
  c.registry_path = j.value("registry_path", "data/registry.json");
  c.threads = j.value("threads", std::size_t{0});
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  out << to_json_string() << "\n";
}

std::uint64_t cell_seed(std::uint64_t base, const std::string& dataset, Estimator est,
                        std::size_t repeat) {
  return derive_seed(base, fnv1a("cell|" + dataset + "|" + estimator_name(est)) + repeat);
}

std::uint64_t split_seed(std::uint64_t base, const std::string& dataset, std::size_t repeat) {
  return derive_seed(base, fnv1a("split|" + dataset) + repeat);
}

data::Dataset resolve_dataset(const ExperimentConfig& cfg, const std::string& ref,
                              std::size_t repeat) {
  if (ref.rfind("synth:", 0) == 0) {
    std::string rest = ref.substr(6);
    std::size_t n = 500;
    if (const std::size_t colon = rest.find(':'); colon != std::string::npos) {
      const std::string n_str = rest.substr(colon + 1);
      try {
        n = static_cast<std::size_t>(std::stoull(n_str));
      } catch (...) {
        throw ConfigError("bad synthetic size '" + n_str + "' in dataset ref '" + ref + "'");
      }
      rest = rest.substr(0, colon);
    }
    const data::SynthProfile profile = data::synth_profile_from_name(rest);
    const std::uint64_t seed = derive_seed(cfg.train.seed, fnv1a("data|" + ref) + repeat);
    return data::synth_heteroscedastic(n, profile, seed).data;
  }
  data::Registry reg = data::Registry::load(cfg.registry_path);
  return reg.open(ref);
}

CellResult run_cell(const ExperimentConfig& cfg, const std::string& dataset, Estimator est,
                    std::size_t repeat, PredictionSet* out_preds,
                    std::vector<estimators::EpochLog>* out_log) {
  CellResult cell;
  cell.dataset = dataset;
  cell.estimator = est;
  cell.repeat = repeat;
  cell.seed = cell_seed(cfg.train.seed, dataset, est, repeat);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    data::Dataset raw = resolve_dataset(cfg, dataset, repeat);
    data::Split split = data::make_split(raw.n(), split_seed(cfg.train.seed, dataset, repeat));
    data::Dataset ds = data::standardize(raw, split);

    estimators::TrainConfig train_cfg = cfg.train;
    train_cfg.seed = cell.seed;
    estimators::TrainResult trained = estimators::train(est, ds, split, train_cfg);
    PredictionSet preds = estimators::predict(trained.model, est, ds, split.test_idx, train_cfg);

    metrics::CalibrationLevels levels;
    levels.levels = cfg.levels;
    metrics::CalibrationResult cal = metrics::calibration_error(preds, levels);
    cell.rmse = metrics::rmse(preds);
    cell.ce = cal.ce;
    cell.n_train = split.train_idx.size();
    cell.n_test = split.test_idx.size();
    cell.ok = true;
    if (out_preds) *out_preds = std::move(preds);
    if (out_log) *out_log = std::move(trained.log);
  } catch (const estimators::TrainingDiverged& e) {
    cell.ok = false;
    cell.error = e.what();
    cell.error_kind = CellErrorKind::kDivergence;
    if (out_log) *out_log = e.partial_log;
  } catch (const DivergenceError& e) {
    cell.ok = false;
    cell.error = e.what();
    cell.error_kind = CellErrorKind::kDivergence;
  } catch (const ConfigError& e) {
    cell.ok = false;
    cell.error = e.what();
    cell.error_kind = CellErrorKind::kConfig;
  } catch (const DataError& e) {
    cell.ok = false;
    cell.error = e.what();
    cell.error_kind = CellErrorKind::kData;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
    cell.error_kind = CellErrorKind::kOther;
  }
  cell.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

namespace {

void aggregate_cells(BenchmarkReport& report) {
  // mean +- std per (dataset, estimator) over successful repeats
  for (const CellResult& c : report.cells) {
    if (!c.ok) continue;
    auto it = std::find_if(report.aggregates.begin(), report.aggregates.end(),
                           [&](const Aggregate& a) {
                             return a.dataset == c.dataset && a.estimator == c.estimator;
                           });
    if (it == report.aggregates.end()) {
      report.aggregates.push_back({c.dataset, c.estimator, 0, 0, 0, 0, 0, 0});
      it = report.aggregates.end() - 1;
    }
    it->repeats += 1;
    it->rmse_mean += c.rmse;
    it->ce_mean += c.ce;
  }
  for (Aggregate& a : report.aggregates) {
    a.rmse_mean /= static_cast<double>(a.repeats);
    a.ce_mean /= static_cast<double>(a.repeats);
  }
  for (const CellResult& c : report.cells) {
    if (!c.ok) continue;
    for (Aggregate& a : report.aggregates) {
      if (a.dataset == c.dataset && a.estimator == c.estimator) {
        a.rmse_std += (c.rmse - a.rmse_mean) * (c.rmse - a.rmse_mean);
        a.ce_std += (c.ce - a.ce_mean) * (c.ce - a.ce_mean);
      }
    }
  }
  for (Aggregate& a : report.aggregates) {
    a.rmse_std = std::sqrt(a.rmse_std / static_cast<double>(a.repeats));
    a.ce_std = std::sqrt(a.ce_std / static_cast<double>(a.repeats));
  }
  // rank by mean CE within each dataset; 1 is best
  for (Aggregate& a : report.aggregates) {
    std::size_t rank = 1;
    for (const Aggregate& other : report.aggregates)
      if (other.dataset == a.dataset && other.ce_mean < a.ce_mean) ++rank;
    a.ce_rank = rank;
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string BenchmarkReport::to_json_string() const {
  json j;
  j["artifact"] = kArtifactName;
  j["version"] = kVersion;
  j["kind"] = kind;
  j["config"] = json::parse(config_json);
  json cells_j = json::array();
  for (const CellResult& c : cells) {
    cells_j.push_back({{"dataset", c.dataset},
                       {"estimator", estimator_name(c.estimator)},
                       {"repeat", c.repeat},
                       {"seed", c.seed},
                       {"ok", c.ok},
                       {"error", c.error},
                       {"rmse", c.rmse},
                       {"ce", c.ce},
                       {"wall_s", c.wall_s},
                       {"n_train", c.n_train},
                       {"n_test", c.n_test}});
  }
  j["cells"] = std::move(cells_j);
  json agg_j = json::array();
  for (const Aggregate& a : aggregates) {
    agg_j.push_back({{"dataset", a.dataset},
                     {"estimator", estimator_name(a.estimator)},
                     {"repeats", a.repeats},
                     {"rmse_mean", a.rmse_mean},
                     {"rmse_std", a.rmse_std},
                     {"ce_mean", a.ce_mean},
                     {"ce_std", a.ce_std},
                     {"ce_rank", a.ce_rank},
                     {"best_ce", a.ce_rank == 1}});
  }
  j["aggregates"] = std::move(agg_j);
  return j.dump(2);
}

std::string validate_report_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    return std::string("not valid JSON: ") + e.what();
  }
  auto need = [&](const json& obj, const char* key, json::value_t type) -> std::string {
    if (!obj.contains(key)) return std::string("missing key '") + key + "'";
    const json& v = obj.at(key);
    if (type == json::value_t::number_float && v.is_number()) return "";
    if (v.type() != type) return std::string("key '") + key + "' has wrong type";
    return "";
  };
  for (const char* k : {"artifact", "version", "kind"})
    if (auto e = need(j, k, json::value_t::string); !e.empty()) return e;
  if (auto e = need(j, "config", json::value_t::object); !e.empty()) return e;
  if (auto e = need(j, "cells", json::value_t::array); !e.empty()) return e;
  if (auto e = need(j, "aggregates", json::value_t::array); !e.empty()) return e;
  for (const json& c : j.at("cells")) {
    for (const char* k : {"dataset", "estimator", "error"})
      if (auto e = need(c, k, json::value_t::string); !e.empty()) return "cells: " + e;
    for (const char* k : {"rmse", "ce", "wall_s"})
      if (auto e = need(c, k, json::value_t::number_float); !e.empty()) return "cells: " + e;
    if (auto e = need(c, "ok", json::value_t::boolean); !e.empty()) return "cells: " + e;
    for (const char* k : {"repeat", "seed", "n_train", "n_test"})
      if (!c.contains(k) || !c.at(k).is_number_unsigned()) return std::string("cells: bad '") + k + "'";
  }
  for (const json& a : j.at("aggregates")) {
    for (const char* k : {"dataset", "estimator"})
      if (auto e = need(a, k, json::value_t::string); !e.empty()) return "aggregates: " + e;
    for (const char* k : {"rmse_mean", "rmse_std", "ce_mean", "ce_std"})
      if (auto e = need(a, k, json::value_t::number_float); !e.empty()) return "aggregates: " + e;
    if (!a.contains("ce_rank") || !a.at("ce_rank").is_number_unsigned())
      return "aggregates: bad 'ce_rank'";
    if (auto e = need(a, "best_ce", json::value_t::boolean); !e.empty()) return "aggregates: " + e;
  }
  return "";
}

std::string sigma_histogram_csv(const PredictionSet& preds) {
  constexpr std::size_t kBins = 50;
  double lo = preds.sigma.empty() ? 0.0 : preds.sigma[0];
  double hi = lo;
  for (double s : preds.sigma) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (!(hi > lo)) hi = lo + 1.0;  // degenerate spread: single occupied bin
  const double width = (hi - lo) / static_cast<double>(kBins);
  std::vector<std::size_t> counts(kBins, 0);
  for (double s : preds.sigma) {
    auto b = static_cast<std::size_t>((s - lo) / width);
    if (b >= kBins) b = kBins - 1;
    counts[b] += 1;
  }
  std::string out = "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < kBins; ++b) {
    out += format_double(lo + width * static_cast<double>(b)) + "," +
           format_double(lo + width * static_cast<double>(b + 1)) + "," +
           std::to_string(counts[b]) + "\n";
  }
  return out;
}

std::string predictions_to_csv(const PredictionSet& preds) {
  std::string out = "mu,sigma,y\n";
  for (std::size_t i = 0; i < preds.size(); ++i)
    out += format_double(preds.mu[i]) + "," + format_double(preds.sigma[i]) + "," +
           format_double(preds.y[i]) + "\n";
  return out;
}

PredictionSet predictions_from_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("mu,sigma,y", 0) != 0)
    throw DataError("predictions file must start with header mu,sigma,y: " + path.string());
  PredictionSet preds;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double mu, sigma, y;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &mu, &sigma, &y) != 3)
      throw DataError("bad predictions row " + std::to_string(lineno) + " in " + path.string());
    preds.mu.push_back(mu);
    preds.sigma.push_back(sigma);
    preds.y.push_back(y);
  }
  preds.validate();
  return preds;
}

BenchmarkReport run_single(const ExperimentConfig& cfg) {
  if (cfg.repeats == 0) throw ConfigError("repeats must be positive");
  resolve_dataset(cfg, cfg.dataset, 0);  // surface dataset problems before training
  std::filesystem::create_directories(cfg.out_dir);

  BenchmarkReport report;
  report.kind = "single";
  report.config_json = cfg.to_json_string();

  metrics::CalibrationLevels levels;
  levels.levels = cfg.levels;
  levels.validate();

  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    PredictionSet preds;
    std::vector<estimators::EpochLog> log;
    CellResult cell = run_cell(cfg, cfg.dataset, cfg.estimator, r, &preds, &log);
    const std::filesystem::path dir = cfg.out_dir;
    const std::string tag = "_r" + std::to_string(r);
    if (!cell.ok) {
      // keep whatever the diverged run logged before failing
      write_text_file(dir / ("train_log" + tag + ".jsonl"), estimators::to_jsonl(log));
      switch (cell.error_kind) {
        case CellErrorKind::kConfig: throw ConfigError(cell.error);
        case CellErrorKind::kDivergence: throw DivergenceError(cell.error);
        default: throw DataError(cell.error);
      }
    }
    report.cells.push_back(cell);
    metrics::CalibrationResult cal = metrics::calibration_error(preds, levels);
    std::ofstream curve(dir / ("curve" + tag + ".csv"));
    cal.curve.write_csv(curve);
    write_text_file(dir / ("sigma_hist" + tag + ".csv"), sigma_histogram_csv(preds));
    write_text_file(dir / ("predictions" + tag + ".csv"), predictions_to_csv(preds));
    write_text_file(dir / ("train_log" + tag + ".jsonl"), estimators::to_jsonl(log));
  }
  aggregate_cells(report);
  write_text_file(std::filesystem::path(cfg.out_dir) / "report.json",
                  report.to_json_string() + "\n");
  write_text_file(std::filesystem::path(cfg.out_dir) / "config.json",
                  cfg.to_json_string() + "\n");
  return report;
}

BenchmarkReport run_benchmark(const ExperimentConfig& cfg, const std::vector<std::string>& datasets,
                              const std::vector<Estimator>& estimators) {
  if (cfg.repeats == 0) throw ConfigError("repeats must be positive");
  if (datasets.empty()) throw ConfigError("benchmark needs at least one dataset");
  if (estimators.empty()) throw ConfigError("benchmark needs at least one estimator");
  std::filesystem::create_directories(cfg.out_dir);

  struct CellSpec {
    std::string dataset;
    Estimator est;
    std::size_t repeat;
  };
  std::vector<CellSpec> specs;
  for (const std::string& d : datasets)
    for (Estimator e : estimators)
      for (std::size_t r = 0; r < cfg.repeats; ++r) specs.push_back({d, e, r});

  BenchmarkReport report;
  report.kind = "benchmark";
  report.config_json = cfg.to_json_string();
  report.cells.resize(specs.size());

  std::size_t workers = cfg.threads == 0 ? std::thread::hardware_concurrency() : cfg.threads;
  workers = std::max<std::size_t>(1, std::min(workers, specs.size()));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      const CellSpec& s = specs[i];
      report.cells[i] = run_cell(cfg, s.dataset, s.est, s.repeat);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  aggregate_cells(report);
  write_text_file(std::filesystem::path(cfg.out_dir) / "report.json",
                  report.to_json_string() + "\n");
  return report;
}

SweepResult sweep_dropout_rate(const ExperimentConfig& cfg, const std::string& dataset,
                               const std::vector<double>& rates,
                               const std::vector<Estimator>& estimators) {
  if (rates.empty()) throw ConfigError("sweep needs at least one dropout rate");
  for (double r : rates)
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("sweep rates must lie in (0, 1)");
  std::filesystem::create_directories(cfg.out_dir);

  struct SweepCell {
    double rate;
    Estimator est;
    std::size_t repeat;
  };
  std::vector<SweepCell> specs;
  for (double rate : rates)
    for (Estimator est : estimators)
      for (std::size_t r = 0; r < cfg.repeats; ++r) specs.push_back({rate, est, r});
  std::vector<CellResult> cells(specs.size());

  std::size_t workers = cfg.threads == 0 ? std::thread::hardware_concurrency() : cfg.threads;
  workers = std::max<std::size_t>(1, std::min(workers, specs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      ExperimentConfig c = cfg;
      c.dataset = dataset;
      c.estimator = specs[i].est;
      c.train.dropout_rate = specs[i].rate;
      cells[i] = run_cell(c, dataset, specs[i].est, specs[i].repeat);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  SweepResult result;
  result.config_json = cfg.to_json_string();
  std::size_t cell_idx = 0;
  for (double rate : rates) {
    for (Estimator est : estimators) {
      double mean = 0.0;
      for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const CellResult& cell = cells[cell_idx + r];
        if (!cell.ok) throw DataError("sweep cell failed: " + cell.error);
        mean += cell.ce;
      }
      mean /= static_cast<double>(cfg.repeats);
      double var = 0.0;
      for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const double d = cells[cell_idx + r].ce - mean;
        var += d * d;
      }
      result.rows.push_back({rate, est, mean, std::sqrt(var / static_cast<double>(cfg.repeats))});
      cell_idx += cfg.repeats;
    }
  }
  write_text_file(std::filesystem::path(cfg.out_dir) / "sweep.csv", result.to_csv());
  return result;
}

std::string SweepResult::to_csv() const {
  std::string out = "rate,estimator,ce_mean,ce_std\n";
  for (const SweepRow& r : rows)
    out += format_double(r.rate) + "," + estimator_name(r.estimator) + "," +
           format_double(r.ce_mean) + "," + format_double(r.ce_std) + "\n";
  return out;
}

}  // namespace hetcal::experiment
