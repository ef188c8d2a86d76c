#pragma once

// Target-versus-proxy comparison cells, score/margin matrices over datasets
// and assessor families, and the diagnostic summaries built on them.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "assessor/dataio.hpp"
#include "assessor/error.hpp"
#include "assessor/learners.hpp"
#include "assessor/metrics.hpp"
#include "assessor/seeding.hpp"
#include "assessor/stats.hpp"

namespace assessor {

struct SplitConfig {
  double subject_holdout = 0.3;
  double assessor_train_fraction = 0.7;
};

struct CellSpec {
  std::string dataset;
  LearnerSpec family;
  Metric target = Metric::SimpleUnsigned;
  Metric proxy = Metric::SimpleSigned;
  std::uint64_t split_seed = 0;
  std::uint64_t seed = 0;  // bootstrap seed for this cell
  BootstrapConfig bootstrap{};
};

struct CellResult {
  CellSpec spec;
  CorrelationResult rho_target;
  CorrelationResult rho_proxy;
  ConfidenceInterval ci_target;
  ConfidenceInterval ci_proxy;
  Verdict verdict;
  std::optional<CalibrationB> b;
  std::size_t n_train_rows = 0;
  std::size_t n_test_rows = 0;
  std::size_t contamination = 0;  // test rows whose x_id also appears in train
  // Test-side vectors; filled only when predictions are kept.
  std::vector<double> truth;
  std::vector<double> target_pred;
  std::vector<double> proxy_raw;
  std::vector<double> proxy_pred;  // proxy_raw mapped into the target metric
};

/// Seed of one comparison, independent of execution order.
inline std::uint64_t cell_seed(std::uint64_t global, std::string_view dataset, Family family,
                               Metric target, Metric proxy) {
  return derive_seed(global, {hash_name(dataset), hash_name(family_name(family)),
                              hash_name(metric_name(target)), hash_name(metric_name(proxy))});
}

inline std::uint64_t split_seed(std::uint64_t global, std::string_view dataset) {
  return derive_seed(global, {hash_name(dataset), hash_name("assessor-split")});
}

// ---------------------------------------------------------------------------
// Per-dataset state shared by every cell of that dataset

struct DatasetContext {
  std::string name;
  const PredictionLog* log = nullptr;
  std::optional<CalibrationB> b;
  GroupedSplit split;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  Matrix train_x;
  Matrix test_x;
  std::size_t contamination = 0;
};

inline bool needs_calibration(std::span<const Metric> metrics) {
  return std::any_of(metrics.begin(), metrics.end(), [](Metric m) { return is_logistic(m); });
}

inline DatasetContext prepare_dataset(std::string name, const PredictionLog& log, double train_fraction,
                                      std::uint64_t seed, bool calibrate) {
  if (log.records.empty()) throw Error(ErrorKind::EmptyData, "log for " + name + " has no rows");
  DatasetContext ctx;
  ctx.name = std::move(name);
  ctx.log = &log;
  if (calibrate && log.task == Task::Regression) ctx.b = dataset_b(log);
  ctx.split = grouped_split(instance_ids(log), train_fraction, seed);
  std::tie(ctx.train_rows, ctx.test_rows) = partition_rows(log, ctx.split);
  for (auto i : ctx.test_rows)
    if (ctx.split.in_train(log.records[i].x_id)) ++ctx.contamination;
  ctx.train_x = assessor_features(log, ctx.train_rows);
  ctx.test_x = assessor_features(log, ctx.test_rows);
  return ctx;
}

/// Fits one assessor on the train rows labelled with `metric`; returns its
/// predictions on the test rows.
inline std::vector<double> assessor_predictions(const DatasetContext& ctx, const LearnerSpec& family,
                                                Metric metric) {
  const auto targets = metric_values(*ctx.log, ctx.train_rows, metric, ctx.b);
  const auto model = fit(family, ctx.train_x, targets);
  return model.predict(ctx.test_x);
}

/// Steps from truth through verdict, given both assessors' raw test predictions.
inline CellResult evaluate_cell(const DatasetContext& ctx, const CellSpec& spec,
                                std::vector<double> target_pred, std::vector<double> proxy_raw,
                                bool keep_predictions) {
  CellResult res;
  res.spec = spec;
  res.b = ctx.b;
  res.n_train_rows = ctx.train_rows.size();
  res.n_test_rows = ctx.test_rows.size();
  res.contamination = ctx.contamination;

  auto truth = metric_values(*ctx.log, ctx.test_rows, spec.target, ctx.b);
  const TransformSpec ts{spec.proxy, spec.target, ctx.b};
  std::vector<double> proxy_pred(proxy_raw.size());
  for (std::size_t i = 0; i < proxy_raw.size(); ++i) proxy_pred[i] = transform(ts, proxy_raw[i]);

  try {
    res.rho_target = spearman(target_pred, truth);
    res.rho_proxy = spearman(proxy_pred, truth);
  } catch (const Error& e) {
    throw Error(e.kind(), ctx.name + " " + std::string(metric_name(spec.target)) + "<-" +
                              std::string(metric_name(spec.proxy)) + ": " + e.what());
  }
  std::tie(res.ci_proxy, res.ci_target) =
      paired_bootstrap_ci(proxy_pred, target_pred, truth, spec.bootstrap, spec.seed);
  res.verdict = verdict(res.ci_proxy, res.ci_target, res.rho_proxy.rho, res.rho_target.rho);
  if (keep_predictions) {
    res.truth = std::move(truth);
    res.target_pred = std::move(target_pred);
    res.proxy_raw = std::move(proxy_raw);
    res.proxy_pred = std::move(proxy_pred);
  }
  return res;
}

inline void check_cell(Task task, Metric target, Metric proxy) {
  if (task_of(target) != task || task_of(proxy) != task)
    throw Error(ErrorKind::TaskMismatch, "cell metrics do not match the log task");
  if (!transform_exists(proxy, target))
    throw Error(ErrorKind::IncompatiblePair, std::string(metric_name(proxy)) + " cannot be mapped to " +
                                                 std::string(metric_name(target)));
}

/// Full protocol for one cell on one dataset's log.
inline CellResult run_cell(const CellSpec& spec, const PredictionLog& log, const SplitConfig& split = {},
                           bool keep_predictions = true) {
  check_cell(log.task, spec.target, spec.proxy);
  const Metric pair[] = {spec.target, spec.proxy};
  const auto ctx = prepare_dataset(spec.dataset, log, split.assessor_train_fraction, spec.split_seed,
                                   needs_calibration(pair));
  auto target_pred = assessor_predictions(ctx, spec.family, spec.target);
  auto proxy_raw = spec.proxy == spec.target ? target_pred : assessor_predictions(ctx, spec.family, spec.proxy);
  return evaluate_cell(ctx, spec, std::move(target_pred), std::move(proxy_raw), keep_predictions);
}

// ---------------------------------------------------------------------------
// Parallel execution

/// Runs job(i) for i in [0, n) on up to `jobs` threads. The exception of the
/// lowest failing index is rethrown, so failures do not depend on scheduling.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& job) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(workers, n); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Matrix

struct MatrixConfig {
  Task task = Task::Regression;
  std::vector<Metric> metrics;  // empty means every metric of the task
  std::vector<LearnerSpec> families = default_assessor_families();
  SplitConfig split{};
  BootstrapConfig bootstrap{};
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct DatasetInput {
  std::string name;
  PredictionLog log;
};

/// Rows are targets, columns are proxies; empty entries are not applicable.
using Grid = std::vector<std::vector<std::optional<double>>>;

struct FamilyGrids {
  std::string family;
  Grid score;
  Grid margin;
};

struct MatrixReport {
  Task task = Task::Regression;
  std::vector<Metric> metrics;
  std::vector<std::string> datasets;
  std::vector<FamilyGrids> per_family;
  FamilyGrids aggregate;
  std::vector<CellResult> cells;

  std::size_t not_applicable_count() const {
    std::size_t n = 0;
    for (const auto& row : aggregate.score)
      for (const auto& v : row)
        if (!v) ++n;
    return n;
  }
};

/// Requested metrics in the fixed report order.
inline std::vector<Metric> ordered_metrics(Task task, std::span<const Metric> requested) {
  std::vector<Metric> out;
  for (Metric m : metrics_for(task))
    if (requested.empty() || std::find(requested.begin(), requested.end(), m) != requested.end())
      out.push_back(m);
  for (Metric m : requested)
    if (task_of(m) != task)
      throw Error(ErrorKind::TaskMismatch, std::string(metric_name(m)) + " is not a " +
                                               std::string(task_name(task)) + " metric");
  return out;
}

inline Grid empty_grid(std::span<const Metric> metrics) {
  Grid g(metrics.size(), std::vector<std::optional<double>>(metrics.size()));
  for (std::size_t t = 0; t < metrics.size(); ++t)
    for (std::size_t p = 0; p < metrics.size(); ++p)
      if (transform_exists(metrics[p], metrics[t])) g[t][p] = 0.0;
  return g;
}

inline MatrixReport run_matrix(std::span<const DatasetInput> datasets, const MatrixConfig& cfg) {
  if (datasets.empty()) throw Error(ErrorKind::InvalidSpec, "no datasets");
  if (cfg.families.empty()) throw Error(ErrorKind::InvalidSpec, "no assessor families");
  for (const auto& f : cfg.families) f.validate();
  MatrixReport report;
  report.task = cfg.task;
  report.metrics = ordered_metrics(cfg.task, cfg.metrics);
  const auto& metrics = report.metrics;
  if (metrics.empty()) throw Error(ErrorKind::InvalidSpec, "no metrics selected");
  for (const auto& ds : datasets) {
    if (ds.log.task != cfg.task)
      throw Error(ErrorKind::TaskMismatch, ds.name + " is a " + std::string(task_name(ds.log.task)) + " log");
    report.datasets.push_back(ds.name);
  }

  const std::size_t n_ds = datasets.size(), n_fam = cfg.families.size(), n_met = metrics.size();
  std::vector<DatasetContext> contexts(n_ds);
  parallel_for(n_ds, cfg.jobs, [&](std::size_t d) {
    contexts[d] = prepare_dataset(datasets[d].name, datasets[d].log, cfg.split.assessor_train_fraction,
                                  split_seed(cfg.seed, datasets[d].name), needs_calibration(metrics));
  });

  // One assessor per (dataset, family, metric), reused by every cell.
  std::vector<std::vector<double>> preds(n_ds * n_fam * n_met);
  auto pred_index = [&](std::size_t d, std::size_t f, std::size_t m) { return (d * n_fam + f) * n_met + m; };
  parallel_for(preds.size(), cfg.jobs, [&](std::size_t i) {
    const std::size_t m = i % n_met, f = (i / n_met) % n_fam, d = i / (n_met * n_fam);
    LearnerSpec family = cfg.families[f];
    family.seed = derive_seed(cfg.seed, {hash_name(datasets[d].name), f});
    preds[i] = assessor_predictions(contexts[d], family, metrics[m]);
  });

  struct Job {
    std::size_t d, f, t, p;
  };
  std::vector<Job> jobs;
  for (std::size_t d = 0; d < n_ds; ++d)
    for (std::size_t f = 0; f < n_fam; ++f)
      for (std::size_t t = 0; t < n_met; ++t)
        for (std::size_t p = 0; p < n_met; ++p)
          if (transform_exists(metrics[p], metrics[t])) jobs.push_back({d, f, t, p});
  report.cells.resize(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t j) {
    const auto [d, f, t, p] = jobs[j];
    CellSpec spec;
    spec.dataset = datasets[d].name;
    spec.family = cfg.families[f];
    spec.target = metrics[t];
    spec.proxy = metrics[p];
    spec.split_seed = split_seed(cfg.seed, spec.dataset);
    spec.seed = cell_seed(cfg.seed, spec.dataset, spec.family.family, spec.target, spec.proxy);
    spec.bootstrap = cfg.bootstrap;
    report.cells[j] = evaluate_cell(contexts[d], spec, preds[pred_index(d, f, t)], preds[pred_index(d, f, p)], false);
  });

  for (std::size_t f = 0; f < n_fam; ++f) {
    FamilyGrids g{std::string(family_name(cfg.families[f].family)), empty_grid(metrics), empty_grid(metrics)};
    // Duplicate families (e.g. two GBT settings) get a positional suffix.
    for (std::size_t o = 0; o < f; ++o)
      if (cfg.families[o].family == cfg.families[f].family) {
        g.family += "_" + std::to_string(f);
        break;
      }
    report.per_family.push_back(std::move(g));
  }
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& job = jobs[j];
    const auto& v = report.cells[j].verdict;
    auto& g = report.per_family[job.f];
    *g.score[job.t][job.p] += points(v.outcome);
    *g.margin[job.t][job.p] += v.margin / static_cast<double>(n_ds);
  }
  report.aggregate = {"aggregate", empty_grid(metrics), empty_grid(metrics)};
  for (const auto& g : report.per_family)
    for (std::size_t t = 0; t < n_met; ++t)
      for (std::size_t p = 0; p < n_met; ++p) {
        if (!g.score[t][p]) continue;
        *report.aggregate.score[t][p] += *g.score[t][p] / static_cast<double>(n_ds * n_fam);
        *report.aggregate.margin[t][p] += *g.margin[t][p] / static_cast<double>(n_fam);
      }
  return report;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct UnderestimationSummary {
  Metric target = Metric::SimpleUnsigned;
  Metric proxy = Metric::SimpleSigned;
  double proxy_gap = 0.0;   // mean(transformed proxy predictions) - mean(truth)
  double target_gap = 0.0;  // mean(direct target predictions) - mean(truth)
  std::vector<double> decile_truth_mean;
  std::vector<double> proxy_decile_gaps;
  std::vector<double> target_decile_gaps;
};

/// Mean prediction minus mean truth overall and within deciles of the truth.
inline UnderestimationSummary underestimation_summary(Metric target, Metric proxy,
                                                      std::span<const double> truth,
                                                      std::span<const double> target_pred,
                                                      std::span<const double> proxy_pred) {
  if (task_of(target) != Task::Regression || is_signed(target) || proxy != counterpart(target))
    throw Error(ErrorKind::MetricMismatch,
                "underestimation needs an unsigned target and its signed counterpart as proxy");
  const std::size_t n = truth.size();
  if (n == 0) throw Error(ErrorKind::EmptyInput, "no rows");
  if (target_pred.size() != n || proxy_pred.size() != n)
    throw Error(ErrorKind::DimensionMismatch, "prediction and truth lengths differ");
  UnderestimationSummary s{target, proxy, 0.0, 0.0, {}, {}, {}};
  auto mean_gap = [&](std::span<const double> pred, std::span<const std::size_t> rows) {
    double gap = 0.0;
    for (auto i : rows) gap += pred[i] - truth[i];
    return gap / static_cast<double>(rows.size());
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  s.proxy_gap = mean_gap(proxy_pred, order);
  s.target_gap = mean_gap(target_pred, order);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return truth[a] < truth[b]; });
  const std::size_t bins = std::min<std::size_t>(10, n);
  for (std::size_t b = 0; b < bins; ++b) {
    const std::span<const std::size_t> rows(order.data() + b * n / bins, (b + 1) * n / bins - b * n / bins);
    double m = 0.0;
    for (auto i : rows) m += truth[i];
    s.decile_truth_mean.push_back(m / static_cast<double>(rows.size()));
    s.proxy_decile_gaps.push_back(mean_gap(proxy_pred, rows));
    s.target_decile_gaps.push_back(mean_gap(target_pred, rows));
  }
  return s;
}

inline UnderestimationSummary underestimation_summary(const CellResult& cell) {
  if (cell.truth.empty()) throw Error(ErrorKind::EmptyInput, "cell was run without kept predictions");
  return underestimation_summary(cell.spec.target, cell.spec.proxy, cell.truth, cell.target_pred,
                                 cell.proxy_pred);
}

struct Histogram {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;

  std::size_t mode_bin() const {
    return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  double bin_center(std::size_t b) const {
    const double width = (hi - lo) / static_cast<double>(counts.size());
    return lo + (static_cast<double>(b) + 0.5) * width;
  }
};

inline constexpr std::size_t kHistogramBins = 64;

/// Equal-width bins over the observed range; a constant input fills bin 0.
inline Histogram histogram(std::string name, std::span<const double> values, std::size_t bins = kHistogramBins) {
  Histogram h{std::move(name), 0.0, 0.0, std::vector<std::size_t>(bins, 0)};
  if (values.empty()) return h;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  h.lo = *mn;
  h.hi = *mx;
  const double width = h.hi - h.lo;
  for (double v : values) {
    std::size_t b = 0;
    if (width > 0.0)
      b = std::min(bins - 1, static_cast<std::size_t>((v - h.lo) / width * static_cast<double>(bins)));
    ++h.counts[b];
  }
  return h;
}

/// Residuals (or principals) and every requested metric of a log.
inline std::vector<Histogram> distribution_report(const PredictionLog& log, std::span<const Metric> requested = {}) {
  if (log.records.empty()) throw Error(ErrorKind::EmptyData, "log has no rows");
  const auto metrics = ordered_metrics(log.task, requested);
  std::vector<std::size_t> rows(log.records.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<Histogram> out;
  std::optional<CalibrationB> b;
  if (log.task == Task::Regression) {
    const auto e = residuals(log);
    out.push_back(histogram("residual", e));
    if (needs_calibration(metrics)) b = dataset_b(log);
  } else {
    std::vector<double> r;
    for (const auto& rec : log.records) r.push_back(principal_of(rec.prediction, static_cast<int>(rec.y_true)).value());
    out.push_back(histogram("principal", r));
  }
  for (Metric m : metrics) out.push_back(histogram(std::string(metric_name(m)), metric_values(log, rows, m, b)));
  return out;
}

// ---------------------------------------------------------------------------
// Output files

namespace detail {

inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v == 0.0 ? 0.0 : v);  // folds -0
  return std::string(buf, res.ptr);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
  os << text;
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path);
}

}  // namespace detail

inline std::string grid_csv(std::span<const Metric> metrics, const Grid& grid) {
  std::string out = "target";
  for (Metric m : metrics) out += "," + std::string(metric_name(m));
  out += '\n';
  for (std::size_t t = 0; t < metrics.size(); ++t) {
    out += metric_name(metrics[t]);
    for (std::size_t p = 0; p < metrics.size(); ++p)
      out += "," + (grid[t][p] ? detail::format_number(*grid[t][p]) : std::string("NA"));
    out += '\n';
  }
  return out;
}

inline std::string cells_csv(const MatrixReport& report) {
  std::string out =
      "dataset,family,target,proxy,b,n_train_rows,n_test_rows,contamination,rho_target,rho_proxy,"
      "ci_target_lo,ci_target_hi,ci_proxy_lo,ci_proxy_hi,outcome,margin\n";
  auto num = detail::format_number;
  for (const auto& c : report.cells) {
    out += c.spec.dataset + "," + std::string(family_name(c.spec.family.family)) + "," +
           std::string(metric_name(c.spec.target)) + "," + std::string(metric_name(c.spec.proxy)) + "," +
           (c.b ? num(c.b->value()) : std::string()) + "," + std::to_string(c.n_train_rows) + "," +
           std::to_string(c.n_test_rows) + "," + std::to_string(c.contamination) + "," +
           num(c.rho_target.rho) + "," + num(c.rho_proxy.rho) + "," + num(c.ci_target.lo) + "," +
           num(c.ci_target.hi) + "," + num(c.ci_proxy.lo) + "," + num(c.ci_proxy.hi) + "," +
           std::string(outcome_name(c.verdict.outcome)) + "," + num(c.verdict.margin) + "\n";
  }
  return out;
}

inline nlohmann::json grid_json(const Grid& grid) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : grid) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& v : r) row.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json matrix_json(const MatrixReport& report) {
  nlohmann::json j;
  j["task"] = task_name(report.task);
  j["metrics"] = nlohmann::json::array();
  for (Metric m : report.metrics) j["metrics"].push_back(metric_name(m));
  j["axes"] = {{"rows", "target"}, {"columns", "proxy"}};
  j["datasets"] = report.datasets;
  j["families"] = nlohmann::json::array();
  for (const auto& g : report.per_family)
    j["families"].push_back({{"family", g.family}, {"score", grid_json(g.score)}, {"margin", grid_json(g.margin)}});
  j["aggregate"] = {{"score", grid_json(report.aggregate.score)}, {"margin", grid_json(report.aggregate.margin)}};
  j["not_applicable_cells"] = report.not_applicable_count();
  return j;
}

/// Writes one CSV per grid plus cells.csv and matrix.json into `dir`.
inline std::vector<std::string> write_matrix_outputs(const std::string& dir, const MatrixReport& report) {
  std::vector<std::string> written;
  auto put = [&](const std::string& name, const std::string& text) {
    detail::write_text(dir + "/" + name, text);
    written.push_back(name);
  };
  for (const auto& g : report.per_family) {
    put("score_" + g.family + ".csv", grid_csv(report.metrics, g.score));
    put("margin_" + g.family + ".csv", grid_csv(report.metrics, g.margin));
  }
  put("score_aggregate.csv", grid_csv(report.metrics, report.aggregate.score));
  put("margin_aggregate.csv", grid_csv(report.metrics, report.aggregate.margin));
  put("cells.csv", cells_csv(report));
  put("matrix.json", matrix_json(report).dump(2) + "\n");
  return written;
}

inline std::string histograms_csv(std::span<const Histogram> hists) {
  std::string out = "quantity,bin,lo,hi,count\n";
  for (const auto& h : hists) {
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b)
      out += h.name + "," + std::to_string(b) + "," + detail::format_number(h.lo + width * static_cast<double>(b)) +
             "," + detail::format_number(h.lo + width * static_cast<double>(b + 1)) + "," +
             std::to_string(h.counts[b]) + "\n";
  }
  return out;
}

}  // namespace assessor
