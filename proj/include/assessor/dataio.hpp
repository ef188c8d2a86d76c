#pragma once

// Synthetic benchmarks, canonical prediction logs (CSV plus JSON sidecar),
// instance-grouped splitting and assessor-table construction.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "assessor/error.hpp"
#include "assessor/learners.hpp"
#include "assessor/matrix.hpp"
#include "assessor/metrics.hpp"
#include "assessor/seeding.hpp"

namespace assessor {

// ---------------------------------------------------------------------------
// Synthetic data

enum class Shape { Skewed, Bimodal, Symmetric };

constexpr std::string_view shape_name(Shape s) {
  switch (s) {
    case Shape::Skewed: return "Skewed";
    case Shape::Bimodal: return "Bimodal";
    case Shape::Symmetric: return "Symmetric";
  }
  return "";
}

inline std::optional<Shape> parse_shape(std::string_view name) {
  for (Shape s : {Shape::Skewed, Shape::Bimodal, Shape::Symmetric})
    if (shape_name(s) == name) return s;
  return std::nullopt;
}

struct SynthSpec {
  Task task = Task::Regression;
  std::size_t n = 1000;
  std::size_t d = 5;
  double noise_sd = 1.0;
  double outlier_rate = 0.0;
  double outlier_scale = 1.0;
  double flip_prob = 0.0;
  Shape shape = Shape::Skewed;
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidSpec, what); };
    if (n < 2) bad("n must be >= 2");
    if (d < 1) bad("d must be >= 1");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) bad("noise_sd must be >= 0");
    if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) bad("outlier_rate must be in [0, 1]");
    if (!(outlier_scale >= 1.0) || !std::isfinite(outlier_scale)) bad("outlier_scale must be >= 1");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) bad("flip_prob must be in [0, 1]");
  }
};

struct SyntheticData {
  Matrix features;
  std::vector<double> targets;
  std::vector<std::uint8_t> outlier;  // 1 where the target was inflated
  std::size_t outlier_count() const {
    return static_cast<std::size_t>(std::count(outlier.begin(), outlier.end(), std::uint8_t{1}));
  }
};

namespace detail {

// Independent substreams so changing one knob does not reshuffle the others.
enum Stream : std::uint64_t { kFeatureStream = 1, kNoiseStream, kOutlierStream, kFlipStream, kModeStream };

inline std::mt19937_64 stream(std::uint64_t seed, Stream s) {
  return std::mt19937_64(derive_seed(seed, {s}));
}

/// Smooth nonlinear response with a positive baseline, so scaling a target up
/// always moves it away from the bulk.
inline double ground_truth(std::span<const double> x) {
  double f = 3.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double w = 1.0 / static_cast<double>(j + 1);
    switch (j % 3) {
      case 0: f += w * std::sin(std::numbers::pi * x[j]); break;
      case 1: f += w * x[j] * x[j]; break;
      default: f += w * std::abs(x[j]); break;
    }
  }
  if (x.size() >= 2) f += 0.5 * x[0] * x[1];
  return f;
}

inline SyntheticData synth_regression(const SynthSpec& spec) {
  auto feat_rng = stream(spec.seed, kFeatureStream);
  auto noise_rng = stream(spec.seed, kNoiseStream);
  auto out_rng = stream(spec.seed, kOutlierStream);
  auto mode_rng = stream(spec.seed, kModeStream);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution is_outlier(spec.outlier_rate);
  std::bernoulli_distribution upper_mode(0.5);

  SyntheticData out{Matrix(spec.n, spec.d), std::vector<double>(spec.n), std::vector<std::uint8_t>(spec.n)};
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto x = out.features.row(i);
    for (auto& v : x) v = unif(feat_rng);
    double noise = spec.noise_sd * gauss(noise_rng);
    switch (spec.shape) {
      case Shape::Skewed:
        // Noise scale grows along the first feature: most rows are easy, a few are hard.
        noise *= 2.0 * std::exp(1.5 * (x[0] - 1.0));
        break;
      case Shape::Bimodal:
        noise = 0.5 * noise + (upper_mode(mode_rng) ? 1.0 : -1.0) * 1.5 * spec.noise_sd;
        break;
      case Shape::Symmetric:
        break;
    }
    double y = ground_truth(x) + noise;
    if (is_outlier(out_rng)) {
      y *= spec.outlier_scale;
      out.outlier[i] = 1;
    }
    out.targets[i] = y;
  }
  return out;
}

inline SyntheticData synth_classification(const SynthSpec& spec) {
  auto feat_rng = stream(spec.seed, kFeatureStream);
  auto noise_rng = stream(spec.seed, kNoiseStream);
  auto flip_rng = stream(spec.seed, kFlipStream);
  auto mode_rng = stream(spec.seed, kModeStream);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution flip(spec.flip_prob);
  std::bernoulli_distribution hard_row(0.35);

  // Fixed alternating-sign direction with decaying weights.
  std::vector<double> w(spec.d);
  double norm = 0.0;
  for (std::size_t j = 0; j < spec.d; ++j) {
    w[j] = (j % 2 == 0 ? 1.0 : -1.0) / std::sqrt(static_cast<double>(j + 1));
    norm += w[j] * w[j];
  }
  for (auto& v : w) v /= std::sqrt(norm);

  const double signal = spec.shape == Shape::Symmetric ? 0.3 : 3.0;
  SyntheticData out{Matrix(spec.n, spec.d), std::vector<double>(spec.n), std::vector<std::uint8_t>(spec.n)};
  for (std::size_t i = 0; i < spec.n; ++i) {
    auto x = out.features.row(i);
    for (auto& v : x) v = gauss(feat_rng);
    double margin = 0.0;
    for (std::size_t j = 0; j < spec.d; ++j) margin += w[j] * x[j];
    const bool hard = hard_row(mode_rng);
    if (spec.shape == Shape::Bimodal && hard) {
      // Pull the row onto the decision boundary, leaving a thin margin.
      const double target = 0.1 * margin;
      for (std::size_t j = 0; j < spec.d; ++j) x[j] += (target - margin) * w[j];
      margin = target;
    }
    // Logistic noise by inversion.
    const double u = std::clamp(unit(noise_rng), 1e-12, 1.0 - 1e-12);
    const double z = signal * margin + spec.noise_sd * std::log(u / (1.0 - u));
    double y = z > 0.0 ? 1.0 : 0.0;
    if (flip(flip_rng)) y = 1.0 - y;
    out.targets[i] = y;
  }
  return out;
}

}  // namespace detail

inline SyntheticData synth_dataset(const SynthSpec& spec) {
  spec.validate();
  return spec.task == Task::Regression ? detail::synth_regression(spec)
                                       : detail::synth_classification(spec);
}

// ---------------------------------------------------------------------------
// Prediction logs

/// One subject's outcome on one instance. `prediction` is y_pred for
/// regression logs and p_pos for classification logs.
struct PredictionRecord {
  std::int64_t x_id = 0;
  std::vector<double> x;
  SubjectVector s;
  double prediction = 0.0;
  double y_true = 0.0;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

struct PredictionLog {
  Task task = Task::Regression;
  std::size_t d = 0;
  std::size_t k = 0;
  std::vector<PredictionRecord> records;

  friend bool operator==(const PredictionLog&, const PredictionLog&) = default;
};

struct LogMetadata {
  Task task = Task::Regression;
  std::size_t d = 0;
  std::size_t k = 0;
  std::string dataset;
  std::uint64_t seed = 0;
  nlohmann::json subject_grid = nlohmann::json::array();
};

inline std::string_view prediction_column(Task t) {
  return t == Task::Regression ? "y_pred" : "p_pos";
}

// ---------------------------------------------------------------------------
// Grouped split

struct GroupedSplit {
  std::vector<std::int64_t> train_ids;  // sorted
  std::vector<std::int64_t> test_ids;   // sorted
  double fraction = 0.7;

  bool in_train(std::int64_t id) const {
    return std::binary_search(train_ids.begin(), train_ids.end(), id);
  }
  bool in_test(std::int64_t id) const {
    return std::binary_search(test_ids.begin(), test_ids.end(), id);
  }
};

/// Seeded shuffle of the unique ids; the first round(fraction * n) go to train.
inline GroupedSplit grouped_split(std::span<const std::int64_t> ids, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error(ErrorKind::DegenerateSplit, "split fraction must be in (0, 1)");
  std::vector<std::int64_t> unique(ids.begin(), ids.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  const std::size_t n = unique.size();
  if (n < 2) throw Error(ErrorKind::DegenerateSplit, "need at least two distinct ids");
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n)
    throw Error(ErrorKind::DegenerateSplit,
                "fraction " + std::to_string(fraction) + " leaves one side empty for " +
                    std::to_string(n) + " ids");
  std::mt19937_64 rng(seed);
  std::shuffle(unique.begin(), unique.end(), rng);
  GroupedSplit split;
  split.fraction = fraction;
  split.train_ids.assign(unique.begin(), unique.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_ids.assign(unique.begin() + static_cast<std::ptrdiff_t>(n_train), unique.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

inline std::vector<std::int64_t> instance_ids(const PredictionLog& log) {
  std::vector<std::int64_t> ids;
  ids.reserve(log.records.size());
  for (const auto& r : log.records) ids.push_back(r.x_id);
  return ids;
}

/// Record indices falling on each side of a split.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition_rows(
    const PredictionLog& log, const GroupedSplit& split) {
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < log.records.size(); ++i)
    (split.in_train(log.records[i].x_id) ? train : test).push_back(i);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Log generation

struct NamedDataset {
  std::string name;
  Task task = Task::Regression;
  SyntheticData data;
};

/// Every grid configuration is fit on the subject-train instances and logged
/// on the held-out instances. x_id is the row index within the dataset.
inline PredictionLog generate_log(const NamedDataset& dataset, std::span<const LearnerSpec> grid,
                                  double holdout, std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorKind::InvalidSpec, "subject grid is empty");
  if (!(holdout > 0.0 && holdout < 1.0)) throw Error(ErrorKind::InvalidSpec, "holdout must be in (0, 1)");
  const auto& data = dataset.data;
  const std::size_t n = data.features.rows();
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
  const auto split = grouped_split(ids, 1.0 - holdout, derive_seed(seed, {hash_name(dataset.name)}));
  std::vector<std::size_t> train_rows(split.train_ids.begin(), split.train_ids.end());
  std::vector<std::size_t> test_rows(split.test_ids.begin(), split.test_ids.end());
  const Matrix x_train = data.features.select_rows(train_rows);
  const Matrix x_test = data.features.select_rows(test_rows);
  std::vector<double> y_train;
  for (auto r : train_rows) y_train.push_back(data.targets[r]);

  PredictionLog log{dataset.task, data.features.cols(), kSubjectWidth, {}};
  log.records.reserve(test_rows.size() * grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c) {
    LearnerSpec spec = grid[c];
    if (is_classifier(spec.family) != (dataset.task == Task::Classification))
      throw Error(ErrorKind::TaskMismatch,
                  std::string(family_name(spec.family)) + " does not fit a " +
                      std::string(task_name(dataset.task)) + " dataset");
    spec.seed = derive_seed(seed, {hash_name(dataset.name), c});
    const auto model = fit(spec, x_train, y_train);
    const auto preds = model.predict(x_test);
    const auto s = subject_vector(grid[c]);
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      const auto xr = x_test.row(i);
      log.records.push_back({static_cast<std::int64_t>(test_rows[i]), {xr.begin(), xr.end()}, s,
                             preds[i], data.targets[test_rows[i]]});
    }
  }
  return log;
}

inline std::vector<PredictionLog> generate_logs(std::span<const NamedDataset> datasets,
                                                std::span<const LearnerSpec> grid, double holdout,
                                                std::uint64_t seed) {
  std::vector<PredictionLog> logs;
  for (const auto& ds : datasets) logs.push_back(generate_log(ds, grid, holdout, seed));
  return logs;
}

// ---------------------------------------------------------------------------
// CSV reading and writing

namespace detail {

inline void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  text = trim(text);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc{} && res.ptr == text.data() + text.size();
}

}  // namespace detail

inline std::string log_header(const PredictionLog& log) {
  std::string h = "x_id";
  for (std::size_t j = 0; j < log.d; ++j) h += ",f_" + std::to_string(j);
  for (std::size_t j = 0; j < log.k; ++j) h += ",s_" + std::to_string(j);
  h += ",";
  h += prediction_column(log.task);
  h += ",y_true";
  return h;
}

inline void write_log(std::ostream& os, const PredictionLog& log) {
  std::string line = log_header(log);
  line += '\n';
  os << line;
  for (const auto& r : log.records) {
    if (r.x.size() != log.d || r.s.size() != log.k)
      throw Error(ErrorKind::DimensionMismatch, "record width differs from log width");
    line = std::to_string(r.x_id);
    for (double v : r.x) {
      line += ',';
      detail::append_number(line, v);
    }
    for (double v : r.s) {
      line += ',';
      detail::append_number(line, v);
    }
    line += ',';
    detail::append_number(line, r.prediction);
    line += ',';
    detail::append_number(line, r.y_true);
    line += '\n';
    os << line;
  }
}

inline void write_log(const std::string& path, const PredictionLog& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
  write_log(os, log);
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path);
}

struct Diagnostic {
  std::size_t line = 0;  // 1-based; the header is line 1
  std::string column;
  std::string message;

  std::string to_string() const {
    std::string s = "line " + std::to_string(line);
    if (!column.empty()) s += ", column " + column;
    return s + ": " + message;
  }
};

struct LogParse {
  PredictionLog log;
  std::vector<Diagnostic> diagnostics;
  bool task_mismatch = false;
};

/// Parses a log, collecting every violation instead of stopping at the first.
inline LogParse parse_log(std::istream& is, std::optional<Task> expected = std::nullopt) {
  LogParse out;
  auto report = [&](std::size_t line, std::string column, std::string message) {
    out.diagnostics.push_back({line, std::move(column), std::move(message)});
  };
  std::string line;
  if (!std::getline(is, line)) {
    report(1, "", "missing header");
    return out;
  }
  const auto header = detail::split_fields(line);
  std::vector<std::string> names;
  for (auto h : header) names.emplace_back(detail::trim(h));

  auto find = [&](std::string_view name) {
    return std::find(names.begin(), names.end(), name) != names.end();
  };
  if (names.empty() || names.front() != "x_id") report(1, "x_id", "first column must be x_id");
  std::size_t d = 0, k = 0;
  while (find("f_" + std::to_string(d))) ++d;
  while (find("s_" + std::to_string(k))) ++k;
  const bool has_pred = find("y_pred"), has_pos = find("p_pos");
  if (has_pred == has_pos) {
    report(1, has_pred ? "p_pos" : "y_pred", "header needs exactly one of y_pred or p_pos");
  }
  if (!find("y_true")) report(1, "y_true", "missing column y_true");
  const Task task = has_pos && !has_pred ? Task::Classification : Task::Regression;
  out.log.task = task;
  out.log.d = d;
  out.log.k = k;

  std::vector<std::string> expected_names{"x_id"};
  for (std::size_t j = 0; j < d; ++j) expected_names.push_back("f_" + std::to_string(j));
  for (std::size_t j = 0; j < k; ++j) expected_names.push_back("s_" + std::to_string(j));
  expected_names.emplace_back(prediction_column(task));
  expected_names.emplace_back("y_true");
  if (out.diagnostics.empty() && names != expected_names) {
    for (std::size_t j = 0; j < std::max(names.size(), expected_names.size()); ++j) {
      if (j >= names.size() || j >= expected_names.size() || names[j] != expected_names[j]) {
        report(1, j < names.size() ? names[j] : expected_names[j],
               "unexpected header column at position " + std::to_string(j + 1));
        break;
      }
    }
  }
  if (expected && *expected != task) {
    out.task_mismatch = true;
    report(1, std::string(prediction_column(task)),
           "TaskMismatch: log is " + std::string(task_name(task)) + ", expected " +
               std::string(task_name(*expected)));
  }
  if (!out.diagnostics.empty()) return out;

  const std::size_t width = expected_names.size();
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != width) {
      report(line_no, "", "expected " + std::to_string(width) + " fields, found " +
                              std::to_string(fields.size()));
      continue;
    }
    PredictionRecord rec;
    rec.x.resize(d);
    rec.s.resize(k);
    bool ok = true;
    if (!detail::parse_number(fields[0], rec.x_id)) {
      report(line_no, "x_id", "not an integer");
      ok = false;
    }
    auto number = [&](std::size_t col, double& dst) {
      if (!detail::parse_number(fields[col], dst) || !std::isfinite(dst)) {
        report(line_no, expected_names[col], "not a finite number: '" + std::string(fields[col]) + "'");
        ok = false;
      }
    };
    for (std::size_t j = 0; j < d; ++j) number(1 + j, rec.x[j]);
    for (std::size_t j = 0; j < k; ++j) number(1 + d + j, rec.s[j]);
    const std::size_t pc = 1 + d + k;
    number(pc, rec.prediction);
    number(pc + 1, rec.y_true);
    if (ok && task == Task::Classification) {
      if (!(rec.prediction >= 0.0 && rec.prediction <= 1.0)) {
        report(line_no, "p_pos", "value " + std::string(detail::trim(fields[pc])) + " outside [0, 1]");
        ok = false;
      }
      if (rec.y_true != 0.0 && rec.y_true != 1.0) {
        report(line_no, "y_true", "classification label must be 0 or 1");
        ok = false;
      }
    }
    if (ok) out.log.records.push_back(std::move(rec));
  }
  return out;
}

inline LogParse parse_log_file(const std::string& path, std::optional<Task> expected = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot open " + path);
  return parse_log(is, expected);
}

/// Strict reader: the first violation becomes an exception.
inline PredictionLog read_log(std::istream& is, std::optional<Task> expected = std::nullopt) {
  auto parsed = parse_log(is, expected);
  if (parsed.task_mismatch) {
    for (const auto& d : parsed.diagnostics)
      if (d.message.starts_with("TaskMismatch")) throw Error(ErrorKind::TaskMismatch, d.to_string());
  }
  if (!parsed.diagnostics.empty())
    throw Error(ErrorKind::SchemaError, parsed.diagnostics.front().to_string());
  return std::move(parsed.log);
}

inline PredictionLog read_log(const std::string& path, std::optional<Task> expected = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot open " + path);
  return read_log(is, expected);
}

// ---------------------------------------------------------------------------
// Sidecar metadata

inline nlohmann::json grid_to_json(std::span<const LearnerSpec> grid) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : grid)
    arr.push_back({{"family", family_name(s.family)},
                   {"max_depth", s.hp.max_depth},
                   {"min_leaf", s.hp.min_leaf},
                   {"lambda", s.hp.lambda},
                   {"k", s.hp.k},
                   {"n_rounds", s.hp.n_rounds},
                   {"learning_rate", s.hp.learning_rate}});
  return arr;
}

inline nlohmann::json sidecar_json(const LogMetadata& m) {
  return {{"task", task_name(m.task)},
          {"d", m.d},
          {"k", m.k},
          {"dataset", m.dataset},
          {"seed", m.seed},
          {"subject_features", subject_feature_names()},
          {"subject_grid", m.subject_grid}};
}

inline void write_sidecar(const std::string& path, const LogMetadata& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
  os << sidecar_json(m).dump(2) << '\n';
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path);
}

inline LogMetadata read_sidecar(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::IoError, "cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
    LogMetadata m;
    const auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw Error(ErrorKind::SchemaError, "sidecar task is not recognised");
    m.task = *task;
    m.d = j.at("d").get<std::size_t>();
    m.k = j.at("k").get<std::size_t>();
    m.dataset = j.value("dataset", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.subject_grid = j.value("subject_grid", nlohmann::json::array());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Assessor tables

struct AssessorTable {
  Matrix features;  // x ++ s
  std::vector<double> targets;
  Metric metric = Metric::SimpleSigned;
  std::optional<CalibrationB> b;
};

inline double record_metric(Task task, const PredictionRecord& r, Metric metric,
                            const std::optional<CalibrationB>& b) {
  if (task == Task::Regression) return eval_loss(metric, r.prediction, r.y_true, b);
  return eval_score(metric, principal_of(r.prediction, static_cast<int>(r.y_true)));
}

/// Feature rows x ++ s for the given records; shared by every metric.
inline Matrix assessor_features(const PredictionLog& log, std::span<const std::size_t> rows) {
  Matrix m(rows.size(), log.d + log.k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = log.records[rows[i]];
    auto out = m.row(i);
    std::copy(r.x.begin(), r.x.end(), out.begin());
    std::copy(r.s.begin(), r.s.end(), out.begin() + static_cast<std::ptrdiff_t>(log.d));
  }
  return m;
}

inline std::vector<double> metric_values(const PredictionLog& log, std::span<const std::size_t> rows,
                                         Metric metric, const std::optional<CalibrationB>& b) {
  if (task_of(metric) != log.task)
    throw Error(ErrorKind::TaskMismatch, std::string(metric_name(metric)) + " does not apply to a " +
                                             std::string(task_name(log.task)) + " log");
  if (is_logistic(metric) && !b)
    throw Error(ErrorKind::MissingCalibration, std::string(metric_name(metric)) + " needs a calibration B");
  std::vector<double> v(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) v[i] = record_metric(log.task, log.records[rows[i]], metric, b);
  return v;
}

inline AssessorTable build_assessor_table(const PredictionLog& log, std::span<const std::size_t> rows,
                                          Metric metric, const std::optional<CalibrationB>& b = {}) {
  auto targets = metric_values(log, rows, metric, b);
  return {assessor_features(log, rows), std::move(targets), metric, b};
}

inline AssessorTable build_assessor_table(const PredictionLog& log, Metric metric,
                                          const std::optional<CalibrationB>& b = {}) {
  std::vector<std::size_t> rows(log.records.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return build_assessor_table(log, rows, metric, b);
}

// ---------------------------------------------------------------------------
// Calibration

inline std::vector<double> residuals(const PredictionLog& log) {
  std::vector<double> e;
  e.reserve(log.records.size());
  for (const auto& r : log.records) e.push_back(r.prediction - r.y_true);
  return e;
}

/// Dataset-level B over every logged row.
inline CalibrationB dataset_b(const PredictionLog& log) {
  if (log.task != Task::Regression) throw Error(ErrorKind::TaskMismatch, "B applies to regression logs only");
  return calibrate_b(residuals(log));
}

struct SubjectCalibration {
  SubjectVector s;
  std::size_t rows = 0;
  std::optional<CalibrationB> b;  // empty when every residual is zero
};

/// B per subject configuration, in order of first appearance.
inline std::vector<SubjectCalibration> per_subject_b(const PredictionLog& log) {
  std::vector<SubjectCalibration> out;
  std::vector<std::vector<double>> res;
  for (const auto& r : log.records) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& c) { return c.s == r.s; });
    if (it == out.end()) {
      out.push_back({r.s, 0, std::nullopt});
      res.emplace_back();
      it = out.end() - 1;
    }
    ++it->rows;
    res[static_cast<std::size_t>(it - out.begin())].push_back(r.prediction - r.y_true);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    try {
      out[i].b = calibrate_b(res[i]);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ZeroMeanResidual) throw;
    }
  }
  return out;
}

}  // namespace assessor
