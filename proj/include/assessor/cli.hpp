#pragma once

// Command-line driver: JSON run configs, the synth/validate/matrix/report
// subcommands, and the exit-code contract.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "assessor/dataio.hpp"
#include "assessor/error.hpp"
#include "assessor/experiment.hpp"
#include "assessor/learners.hpp"
#include "assessor/metrics.hpp"

#ifndef ASSESSOR_VERSION
#define ASSESSOR_VERSION "0.1.0"
#endif

namespace assessor::cli {

enum ExitCode : int { kOk = 0, kValidationFailure = 1, kConfigError = 2, kIoError = 3 };

struct DatasetConfig {
  std::string name;
  std::optional<SynthSpec> synthetic;
  std::optional<std::string> log_path;
};

struct RunConfig {
  Task task = Task::Regression;
  std::uint64_t seed = 0;
  std::vector<DatasetConfig> datasets;
  std::vector<LearnerSpec> subject_grid;
  std::string subject_grid_label = "default";
  std::vector<LearnerSpec> assessor_families;
  std::vector<Metric> metrics;  // empty means all metrics of the task
  SplitConfig split{};
  BootstrapConfig bootstrap{};
  std::string output_dir;
  nlohmann::json source;  // the document as given, for run metadata
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  int jobs = 1;
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

[[noreturn]] inline void config_error(const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); }

inline const nlohmann::json* field(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double number(const nlohmann::json& obj, const char* key, double fallback, const std::string& where) {
  const auto* v = field(obj, key);
  if (!v) return fallback;
  if (!v->is_number()) config_error(where + "." + key + " must be a number");
  return v->get<double>();
}

inline std::int64_t integer(const nlohmann::json& obj, const char* key, std::int64_t fallback,
                            const std::string& where) {
  const auto* v = field(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer()) config_error(where + "." + key + " must be an integer");
  return v->get<std::int64_t>();
}

inline std::uint64_t seed_value(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    config_error(where + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::vector<LearnerSpec> parse_learners(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) config_error(where + " must be \"default\" or a non-empty array");
  std::vector<LearnerSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (!e.is_object()) config_error(at + " must be an object");
    const auto* fam = field(e, "family");
    if (!fam || !fam->is_string()) config_error(at + ".family is required");
    const auto family = parse_family(fam->get<std::string>());
    if (!family) config_error(at + ": unknown family '" + fam->get<std::string>() + "'");
    LearnerSpec spec{*family, {}, 0};
    spec.hp.max_depth = static_cast<int>(integer(e, "max_depth", spec.hp.max_depth, at));
    spec.hp.min_leaf = static_cast<int>(integer(e, "min_leaf", spec.hp.min_leaf, at));
    spec.hp.lambda = number(e, "lambda", spec.hp.lambda, at);
    spec.hp.k = static_cast<int>(integer(e, "k", spec.hp.k, at));
    spec.hp.n_rounds = static_cast<int>(integer(e, "n_rounds", spec.hp.n_rounds, at));
    spec.hp.learning_rate = number(e, "learning_rate", spec.hp.learning_rate, at);
    try {
      spec.validate();
    } catch (const Error& err) {
      config_error(at + ": " + err.what());
    }
    out.push_back(spec);
  }
  return out;
}

inline SynthSpec parse_synth(const nlohmann::json& j, Task task, std::uint64_t default_seed, const std::string& at) {
  if (!j.is_object()) config_error(at + " must be an object");
  SynthSpec s;
  s.task = task;
  const auto n = integer(j, "n", static_cast<std::int64_t>(s.n), at);
  const auto d = integer(j, "d", static_cast<std::int64_t>(s.d), at);
  if (n < 2) config_error(at + ".n must be >= 2");
  if (d < 1) config_error(at + ".d must be >= 1");
  s.n = static_cast<std::size_t>(n);
  s.d = static_cast<std::size_t>(d);
  s.noise_sd = number(j, "noise_sd", s.noise_sd, at);
  s.outlier_rate = number(j, "outlier_rate", s.outlier_rate, at);
  s.outlier_scale = number(j, "outlier_scale", s.outlier_scale, at);
  s.flip_prob = number(j, "flip_prob", s.flip_prob, at);
  if (const auto* sh = field(j, "shape")) {
    const auto shape = sh->is_string() ? parse_shape(sh->get<std::string>()) : std::nullopt;
    if (!shape) config_error(at + ".shape must be one of Skewed, Bimodal, Symmetric");
    s.shape = *shape;
  }
  s.seed = field(j, "seed") ? seed_value(j["seed"], at + ".seed") : default_seed;
  try {
    s.validate();
  } catch (const Error& err) {
    config_error(at + ": " + err.what());
  }
  return s;
}

}  // namespace detail

inline Metric parse_metric_or_throw(const std::string& name) {
  const auto m = parse_metric(name);
  if (!m) throw Error(ErrorKind::ConfigError, "unknown metric '" + name + "'");
  return *m;
}

/// Validates the whole document before any work is done.
inline RunConfig parse_run_config(const nlohmann::json& j, const Overrides& ov = {},
                                  const std::filesystem::path& base_dir = {}) {
  using detail::config_error;
  if (!j.is_object()) config_error("config must be a JSON object");
  RunConfig cfg;
  cfg.source = j;

  const auto* task = detail::field(j, "task");
  if (!task || !task->is_string()) config_error("missing required field 'task'");
  const auto t = parse_task(task->get<std::string>());
  if (!t) config_error("task must be regression or classification");
  cfg.task = *t;

  if (ov.seed) cfg.seed = *ov.seed;
  else if (const auto* s = detail::field(j, "seed")) cfg.seed = detail::seed_value(*s, "seed");
  else config_error("missing required field 'seed' (or pass --seed)");

  const auto* ds = detail::field(j, "datasets");
  if (!ds || !ds->is_array() || ds->empty()) config_error("'datasets' must be a non-empty array");
  for (std::size_t i = 0; i < ds->size(); ++i) {
    const auto& e = (*ds)[i];
    const std::string at = "datasets[" + std::to_string(i) + "]";
    if (!e.is_object()) config_error(at + " must be an object");
    DatasetConfig dc;
    const auto* name = detail::field(e, "name");
    if (!name || !name->is_string() || name->get<std::string>().empty()) config_error(at + ".name is required");
    dc.name = name->get<std::string>();
    if (dc.name.find_first_of("/\\,") != std::string::npos) config_error(at + ".name may not contain / \\ or ,");
    for (const auto& prev : cfg.datasets)
      if (prev.name == dc.name) config_error(at + ": duplicate dataset name '" + dc.name + "'");
    const auto* syn = detail::field(e, "synthetic");
    const auto* log = detail::field(e, "log");
    if ((syn != nullptr) == (log != nullptr)) config_error(at + " needs exactly one of 'synthetic' or 'log'");
    if (syn) {
      dc.synthetic = detail::parse_synth(*syn, cfg.task, derive_seed(cfg.seed, {hash_name(dc.name)}),
                                         at + ".synthetic");
    } else {
      if (!log->is_string()) config_error(at + ".log must be a path string");
      std::filesystem::path p = log->get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      dc.log_path = p.string();
    }
    cfg.datasets.push_back(std::move(dc));
  }

  const auto* grid = detail::field(j, "subject_grid");
  if (!grid || (grid->is_string() && grid->get<std::string>() == "default")) {
    cfg.subject_grid = cfg.task == Task::Regression ? default_regression_grid() : default_classification_grid();
  } else {
    cfg.subject_grid = detail::parse_learners(*grid, "subject_grid");
    cfg.subject_grid_label = "custom";
    for (const auto& s : cfg.subject_grid)
      if (is_classifier(s.family) != (cfg.task == Task::Classification))
        config_error("subject_grid: " + std::string(family_name(s.family)) + " does not fit a " +
                     std::string(task_name(cfg.task)) + " task");
  }

  const auto* fam = detail::field(j, "assessor_families");
  if (!fam || (fam->is_string() && fam->get<std::string>() == "default")) {
    cfg.assessor_families = default_assessor_families();
  } else {
    cfg.assessor_families = detail::parse_learners(*fam, "assessor_families");
    for (const auto& s : cfg.assessor_families)
      if (is_classifier(s.family))
        config_error("assessor_families: " + std::string(family_name(s.family)) +
                     " cannot regress metric values");
  }

  if (const auto* ms = detail::field(j, "metrics")) {
    if (!ms->is_array()) config_error("'metrics' must be an array of metric names");
    for (const auto& m : *ms) {
      if (!m.is_string()) config_error("'metrics' entries must be strings");
      const Metric metric = parse_metric_or_throw(m.get<std::string>());
      if (task_of(metric) != cfg.task)
        config_error("metric '" + m.get<std::string>() + "' does not apply to a " +
                     std::string(task_name(cfg.task)) + " task");
      cfg.metrics.push_back(metric);
    }
    if (cfg.metrics.empty()) config_error("'metrics' may not be empty");
  }

  if (const auto* sp = detail::field(j, "split")) {
    if (!sp->is_object()) config_error("'split' must be an object");
    cfg.split.subject_holdout = detail::number(*sp, "subject_holdout", cfg.split.subject_holdout, "split");
    cfg.split.assessor_train_fraction =
        detail::number(*sp, "assessor_train_fraction", cfg.split.assessor_train_fraction, "split");
    for (double f : {cfg.split.subject_holdout, cfg.split.assessor_train_fraction})
      if (!(f > 0.0 && f < 1.0)) config_error("split fractions must be in (0, 1)");
  }

  if (const auto* bs = detail::field(j, "bootstrap")) {
    if (!bs->is_object()) config_error("'bootstrap' must be an object");
    const auto n = detail::integer(*bs, "n_resamples", cfg.bootstrap.n_resamples, "bootstrap");
    if (n < 1 || n > 1000000) config_error("bootstrap.n_resamples must be in [1, 1000000]");
    cfg.bootstrap.n_resamples = static_cast<int>(n);
    cfg.bootstrap.level = detail::number(*bs, "level", cfg.bootstrap.level, "bootstrap");
    if (!(cfg.bootstrap.level > 0.0 && cfg.bootstrap.level < 1.0)) config_error("bootstrap.level must be in (0, 1)");
    if (const auto* unit = detail::field(*bs, "resample_unit")) {
      if (!unit->is_string()) config_error("bootstrap.resample_unit must be a string");
      if (unit->get<std::string>() == "instance")
        config_error("bootstrap.resample_unit 'instance' is reserved and not implemented; use 'row'");
      if (unit->get<std::string>() != "row") config_error("bootstrap.resample_unit must be 'row'");
    }
  }

  if (ov.output_dir) cfg.output_dir = *ov.output_dir;
  else if (const auto* od = detail::field(j, "output_dir")) {
    if (!od->is_string()) config_error("'output_dir' must be a string");
    std::filesystem::path p = od->get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    cfg.output_dir = p.string();
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path, const Overrides& ov = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::ConfigError, "cannot read config " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigError, path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, ov, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Shared steps

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError: return kIoError;
    case ErrorKind::SchemaError:
    case ErrorKind::TaskMismatch: return kValidationFailure;
    default: return kConfigError;
  }
}

inline void ensure_output_dir(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorKind::ConfigError, "no output directory (set output_dir or pass --out)");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error(ErrorKind::IoError, "cannot create output directory " + dir);
  const auto probe = std::filesystem::path(dir) / ".write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw Error(ErrorKind::IoError, "output directory " + dir + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

inline NamedDataset synthesize(const DatasetConfig& dc, Task task) {
  return {dc.name, task, synth_dataset(*dc.synthetic)};
}

/// Builds or loads the prediction log of every configured dataset.
inline std::vector<DatasetInput> materialize(const RunConfig& cfg) {
  std::vector<DatasetInput> out;
  for (const auto& dc : cfg.datasets) {
    if (dc.synthetic) {
      out.push_back({dc.name, generate_log(synthesize(dc, cfg.task), cfg.subject_grid,
                                           cfg.split.subject_holdout, cfg.seed)});
    } else {
      auto log = read_log(*dc.log_path, cfg.task);
      if (log.records.empty()) throw Error(ErrorKind::EmptyData, "log " + *dc.log_path + " has no data rows");
      out.push_back({dc.name, std::move(log)});
    }
  }
  return out;
}

inline nlohmann::json run_metadata(const RunConfig& cfg, std::string_view command,
                                   std::span<const DatasetInput> data) {
  nlohmann::json config = cfg.source;
  config.erase("output_dir");
  nlohmann::json datasets = nlohmann::json::array();
  for (const auto& d : data) {
    nlohmann::json e{{"name", d.name}, {"rows", d.log.records.size()}, {"d", d.log.d}, {"k", d.log.k}};
    if (d.log.task == Task::Regression) {
      e["b"] = dataset_b(d.log).value();
      nlohmann::json per = nlohmann::json::array();
      for (const auto& c : per_subject_b(d.log))
        per.push_back(c.b ? nlohmann::json(c.b->value()) : nlohmann::json(nullptr));
      e["b_per_subject"] = per;
    }
    datasets.push_back(std::move(e));
  }
  return {{"tool", "assessor-bench"},
          {"version", ASSESSOR_VERSION},
          {"command", command},
          {"seed", cfg.seed},
          {"task", task_name(cfg.task)},
          {"config", config},
          {"subject_grid", grid_to_json(cfg.subject_grid)},
          {"assessor_families", grid_to_json(cfg.assessor_families)},
          {"datasets", datasets},
          {"decisions",
           {{"split", "one assessor split per dataset shared by every cell"},
            {"calibration_b", "dataset level: ln 3 / mean |residual| over all logged rows"},
            {"bootstrap", "paired row-level resampling, percentile interval with linear interpolation"},
            {"clamping", "proxy predictions clamped to the source metric's attainable range before inversion"}}}};
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::IoError, "cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw Error(ErrorKind::IoError, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  ensure_output_dir(cfg.output_dir);
  std::vector<DatasetInput> written;
  for (const auto& dc : cfg.datasets) {
    if (!dc.synthetic) {
      out << dc.name << ": log dataset, nothing to synthesize\n";
      continue;
    }
    const auto ds = synthesize(dc, cfg.task);
    // Raw instances alongside the log.
    std::string data_csv;
    for (std::size_t j = 0; j < dc.synthetic->d; ++j) data_csv += "f_" + std::to_string(j) + ",";
    data_csv += "y\n";
    for (std::size_t i = 0; i < ds.data.features.rows(); ++i) {
      for (double v : ds.data.features.row(i)) data_csv += assessor::detail::format_number(v) + ",";
      data_csv += assessor::detail::format_number(ds.data.targets[i]) + "\n";
    }
    assessor::detail::write_text(cfg.output_dir + "/" + dc.name + ".data.csv", data_csv);

    auto log = generate_log(ds, cfg.subject_grid, cfg.split.subject_holdout, cfg.seed);
    write_log(cfg.output_dir + "/" + dc.name + ".csv", log);
    write_sidecar(cfg.output_dir + "/" + dc.name + ".json",
                  {cfg.task, log.d, log.k, dc.name, dc.synthetic->seed, grid_to_json(cfg.subject_grid)});
    out << dc.name << ": " << ds.data.features.rows() << " instances, " << log.records.size()
        << " prediction rows\n";
    written.push_back({dc.name, std::move(log)});
  }
  write_json(cfg.output_dir + "/run_metadata.json", run_metadata(cfg, "synth", written));
  return kOk;
}

inline int cmd_validate(const std::string& path, std::optional<Task> task, std::ostream& out, std::ostream& err) {
  const auto parsed = parse_log_file(path, task);
  for (const auto& d : parsed.diagnostics) err << path << ": " << d.to_string() << '\n';
  if (!parsed.diagnostics.empty()) {
    err << parsed.diagnostics.size() << " violation(s)\n";
    return kValidationFailure;
  }
  out << path << ": ok, " << task_name(parsed.log.task) << ", " << parsed.log.records.size() << " rows, d="
      << parsed.log.d << ", k=" << parsed.log.k << '\n';
  return kOk;
}

inline int cmd_matrix(const RunConfig& cfg, int jobs, std::ostream& out) {
  ensure_output_dir(cfg.output_dir);
  const auto data = materialize(cfg);
  MatrixConfig mc;
  mc.task = cfg.task;
  mc.metrics = cfg.metrics;
  mc.families = cfg.assessor_families;
  mc.split = cfg.split;
  mc.bootstrap = cfg.bootstrap;
  mc.seed = cfg.seed;
  mc.jobs = jobs;
  const auto report = run_matrix(data, mc);
  const auto files = write_matrix_outputs(cfg.output_dir, report);
  write_json(cfg.output_dir + "/run_metadata.json", run_metadata(cfg, "matrix", data));
  std::size_t contaminated = 0;
  for (const auto& c : report.cells) contaminated += c.contamination;
  out << report.cells.size() << " cells over " << data.size() << " dataset(s), " << report.per_family.size()
      << " family(ies); " << report.not_applicable_count() << " NA cells; contamination " << contaminated << "\n"
      << "aggregate score:\n"
      << grid_csv(report.metrics, report.aggregate.score);
  for (const auto& f : files) out << "wrote " << f << '\n';
  return kOk;
}

inline int cmd_report(const RunConfig& cfg, std::ostream& out) {
  ensure_output_dir(cfg.output_dir);
  const auto data = materialize(cfg);
  const auto metrics = ordered_metrics(cfg.task, cfg.metrics);
  for (const auto& ds : data) {
    const auto hists = distribution_report(ds.log, metrics);
    assessor::detail::write_text(cfg.output_dir + "/hist_" + ds.name + ".csv", histograms_csv(hists));
    out << "hist_" << ds.name << ".csv: " << hists.size() << " histograms\n";
    if (cfg.task != Task::Regression) continue;

    std::string csv = "family,target,proxy,decile,truth_mean,proxy_gap,target_gap\n";
    for (const auto& fam : cfg.assessor_families)
      for (Metric target : metrics) {
        if (is_signed(target) || std::find(metrics.begin(), metrics.end(), counterpart(target)) == metrics.end())
          continue;
        CellSpec spec;
        spec.dataset = ds.name;
        spec.family = fam;
        spec.target = target;
        spec.proxy = counterpart(target);
        spec.split_seed = split_seed(cfg.seed, ds.name);
        spec.seed = cell_seed(cfg.seed, ds.name, fam.family, spec.target, spec.proxy);
        spec.bootstrap = cfg.bootstrap;
        const auto cell = run_cell(spec, ds.log, cfg.split, true);
        const auto u = underestimation_summary(cell);
        const std::string prefix = std::string(family_name(fam.family)) + "," + std::string(metric_name(target)) +
                                   "," + std::string(metric_name(spec.proxy)) + ",";
        csv += prefix + "all,," + assessor::detail::format_number(u.proxy_gap) + "," + assessor::detail::format_number(u.target_gap) + "\n";
        for (std::size_t b = 0; b < u.proxy_decile_gaps.size(); ++b)
          csv += prefix + std::to_string(b + 1) + "," + assessor::detail::format_number(u.decile_truth_mean[b]) + "," +
                 assessor::detail::format_number(u.proxy_decile_gaps[b]) + "," + assessor::detail::format_number(u.target_decile_gaps[b]) +
                 "\n";
      }
    assessor::detail::write_text(cfg.output_dir + "/underestimation_" + ds.name + ".csv", csv);
    out << "underestimation_" << ds.name << ".csv\n";
  }
  write_json(cfg.output_dir + "/run_metadata.json", run_metadata(cfg, "report", data));
  return kOk;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Assessor proxy-metric benchmark", "assessor-bench"};
  app.set_version_flag("--version", std::string(ASSESSOR_VERSION));
  app.require_subcommand(1);

  std::string config_path, out_dir, log_path, task_flag;
  std::uint64_t seed = 0;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "global seed (overrides config)");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1, 1024));
  };
  auto* synth = app.add_subcommand("synth", "generate synthetic datasets and prediction logs");
  add_common(synth);
  auto* matrix = app.add_subcommand("matrix", "run the target/proxy comparison matrix");
  add_common(matrix);
  auto* report = app.add_subcommand("report", "write histograms and underestimation summaries");
  add_common(report);
  auto* validate = app.add_subcommand("validate", "schema-check a prediction log");
  validate->add_option("log", log_path, "prediction log CSV")->required();
  validate->add_option("--task", task_flag, "expected task: regression|classification (reg|clf)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (validate->parsed()) {
      std::optional<Task> task;
      if (!task_flag.empty()) {
        task = parse_task(task_flag);
        if (!task) throw Error(ErrorKind::ConfigError, "unknown task '" + task_flag + "'");
      }
      return cmd_validate(log_path, task, out, err);
    }
    Overrides ov;
    ov.jobs = jobs;
    for (auto* sub : {synth, matrix, report})
      if (sub->parsed()) {
        if (sub->count("--seed")) ov.seed = seed;
        if (sub->count("--out")) ov.output_dir = out_dir;
      }
    const auto cfg = load_run_config(config_path, ov);
    if (synth->parsed()) return cmd_synth(cfg, out);
    if (matrix->parsed()) return cmd_matrix(cfg, jobs, out);
    return cmd_report(cfg, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
}

}  // namespace assessor::cli
