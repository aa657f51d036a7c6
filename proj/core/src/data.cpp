#include "hetcal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "hetcal/errors.hpp"
#include "hetcal/rng.hpp"

namespace hetcal::data {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return cells;
}

bool is_missing(const std::string& cell) {
  if (cell.empty() || cell == "?") return true;
  std::string low;
  for (char c : cell) low += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return low == "na" || low == "nan" || low == "null";
}

// strict full-cell numeric parse
bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const TargetSpec& target) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file: " + path.string());
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  std::vector<std::string> header = split_line(line);
  const std::size_t n_cols = header.size();
  if (n_cols < 2) throw DataError("need at least one feature column and a target column");

  std::size_t target_col;
  if (target.name) {
    auto it = std::find(header.begin(), header.end(), *target.name);
    if (it == header.end())
      throw DataError("target column '" + *target.name + "' not found in " + path.string());
    target_col = static_cast<std::size_t>(it - header.begin());
  } else if (target.index) {
    if (*target.index >= n_cols) throw DataError("target column index out of range");
    target_col = *target.index;
  } else {
    target_col = n_cols - 1;
  }

  std::vector<std::vector<double>> feature_rows;
  std::vector<double> targets;
  std::size_t dropped = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() != n_cols)
      throw DataError("row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(n_cols) + " in " + path.string());
    bool missing = false;
    std::vector<double> values(n_cols);
    for (std::size_t j = 0; j < n_cols; ++j) {
      if (is_missing(cells[j])) {
        missing = true;
        break;
      }
      if (!parse_double(cells[j], values[j]))
        throw DataError("unparseable cell at row " + std::to_string(lineno) + ", column '" +
                        header[j] + "' in " + path.string());
    }
    if (missing) {
      ++dropped;
      continue;
    }
    std::vector<double> feats;
    feats.reserve(n_cols - 1);
    for (std::size_t j = 0; j < n_cols; ++j)
      if (j != target_col) feats.push_back(values[j]);
    feature_rows.push_back(std::move(feats));
    targets.push_back(values[target_col]);
  }

  if (targets.empty()) throw DataError("no usable rows in " + path.string());

  Dataset ds;
  ds.name = path.stem().string();
  ds.rows_dropped = dropped;
  ds.x = Mat(targets.size(), n_cols - 1);
  for (std::size_t i = 0; i < feature_rows.size(); ++i)
    for (std::size_t j = 0; j + 1 < n_cols; ++j) ds.x(i, j) = feature_rows[i][j];
  ds.y = std::move(targets);
  for (std::size_t j = 0; j < n_cols; ++j)
    if (j != target_col) ds.column_names.push_back(header[j]);
  ds.column_names.push_back(header[target_col]);
  return ds;
}

Split make_split(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw ConfigError("need at least 10 rows to split");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, fnv1a("split")));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);

  const auto n_test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  Split s;
  s.seed = seed;
  s.test_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  return s;
}

Dataset standardize(const Dataset& raw, const Split& split) {
  if (raw.standardized) throw ConfigError("dataset already standardized");
  const std::size_t d = raw.dim();
  const std::size_t n_train = split.train_idx.size();
  if (n_train == 0) throw ConfigError("empty train split");

  Dataset ds = raw;
  ds.x_mean.assign(d, 0.0);
  ds.x_std.assign(d, 0.0);
  for (std::size_t i : split.train_idx)
    for (std::size_t j = 0; j < d; ++j) ds.x_mean[j] += raw.x(i, j);
  for (double& m : ds.x_mean) m /= static_cast<double>(n_train);
  for (std::size_t i : split.train_idx)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = raw.x(i, j) - ds.x_mean[j];
      ds.x_std[j] += c * c;
    }
  for (double& s : ds.x_std) {
    s = std::sqrt(s / static_cast<double>(n_train));
    if (s < 1e-12) s = 1.0;  // constant column: keep indexing, no rescale
  }

  double ym = 0.0;
  for (std::size_t i : split.train_idx) ym += raw.y[i];
  ym /= static_cast<double>(n_train);
  double ys = 0.0;
  for (std::size_t i : split.train_idx) {
    const double c = raw.y[i] - ym;
    ys += c * c;
  }
  ys = std::sqrt(ys / static_cast<double>(n_train));
  if (ys < 1e-12) ys = 1.0;
  ds.y_mean = ym;
  ds.y_std = ys;

  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < d; ++j) ds.x(i, j) = (raw.x(i, j) - ds.x_mean[j]) / ds.x_std[j];
    ds.y[i] = (raw.y[i] - ym) / ys;
  }
  ds.standardized = true;
  return ds;
}

SynthProfile synth_profile_from_name(const std::string& name) {
  if (name == "linear_gauss") return SynthProfile::kLinearGauss;
  if (name == "sine_abs_noise") return SynthProfile::kSineAbsNoise;
  if (name == "uniform_band") return SynthProfile::kUniformBand;
  throw ConfigError("unknown synthetic profile '" + name + "'");
}

std::string synth_profile_name(SynthProfile p) {
  switch (p) {
    case SynthProfile::kLinearGauss: return "linear_gauss";
    case SynthProfile::kSineAbsNoise: return "sine_abs_noise";
    case SynthProfile::kUniformBand: return "uniform_band";
  }
  return "?";
}

SynthData synth_heteroscedastic(std::size_t n, SynthProfile profile, std::uint64_t seed,
                                double noise_scale) {
  if (n < 100) throw ConfigError("synthetic datasets need n >= 100");
  SynthData out;
  out.data.name = "synth_" + synth_profile_name(profile);
  out.data.x = Mat(n, 1);
  out.data.y.resize(n);
  out.sigma_true.resize(n);
  out.data.column_names = {"x", "y"};
  Rng rng(derive_seed(seed, fnv1a("synth:" + synth_profile_name(profile))));

  for (std::size_t i = 0; i < n; ++i) {
    switch (profile) {
      case SynthProfile::kLinearGauss: {
        const double x = rng.uniform(-3.0, 3.0);
        const double sigma = 0.5 * noise_scale;
        out.data.x(i, 0) = x;
        out.data.y[i] = 3.0 * x + sigma * rng.normal();
        out.sigma_true[i] = sigma;
        break;
      }
      case SynthProfile::kSineAbsNoise: {
        const double x = rng.uniform(-3.0, 3.0);
        const double sigma = std::abs(x) / 3.0 * noise_scale;
        out.data.x(i, 0) = x;
        out.data.y[i] = std::sin(x) + sigma * rng.normal();
        out.sigma_true[i] = sigma;
        break;
      }
      case SynthProfile::kUniformBand: {
        out.data.x(i, 0) = 1.0;
        out.data.y[i] = noise_scale * rng.uniform(-1.0, 1.0);
        // std of U[-a, a] is a / sqrt(3)
        out.sigma_true[i] = noise_scale / std::sqrt(3.0);
        break;
      }
    }
  }
  return out;
}

Registry Registry::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open dataset registry: " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed registry " + manifest_path.string() + ": " + e.what());
  }
  Registry reg;
  reg.base_dir_ = manifest_path.parent_path();
  for (const auto& je : j.at("datasets")) {
    RegistryEntry e;
    e.name = je.at("name").get<std::string>();
    e.file = je.at("file").get<std::string>();
    e.target = je.at("target").get<std::string>();
    e.expected_rows = je.at("expected_rows").get<std::size_t>();
    e.expected_cols = je.at("expected_cols").get<std::size_t>();
    e.source = je.value("source", "");
    e.notes = je.value("notes", "");
    reg.entries_.push_back(std::move(e));
  }
  return reg;
}

const RegistryEntry& Registry::resolve(const std::string& name) const {
  for (const RegistryEntry& e : entries_)
    if (e.name == name) return e;
  std::string known;
  for (const RegistryEntry& e : entries_) known += (known.empty() ? "" : ", ") + e.name;
  throw DataError("dataset '" + name + "' not in registry (known: " + known + ")");
}

std::filesystem::path Registry::file_path(const RegistryEntry& entry) const {
  std::filesystem::path p = entry.file;
  return p.is_absolute() ? p : base_dir_ / p;
}

Dataset Registry::open(const std::string& name) const {
  const RegistryEntry& e = resolve(name);
  const std::filesystem::path p = file_path(e);
  if (!std::filesystem::exists(p))
    throw DataError("dataset '" + name + "' file missing: " + p.string() +
                    " -- run tools/fetch_datasets.py to download and convert it (source: " +
                    e.source + ")");
  TargetSpec spec;
  spec.name = e.target;
  Dataset ds = load_csv(p, spec);
  ds.name = e.name;
  return ds;
}

}  // namespace hetcal::data
