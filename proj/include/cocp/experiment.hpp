#pragma once

// Experiment runner: seeded repetitions of {draw or resplit data, fit each
// method, evaluate every metric}, with per-repetition CSV rows flushed as
// they complete and mean/std summaries per method. Also the T-ablation
// driver that reruns the alternating trainer at several T with shared seeds.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cocp/cocp_trainer.hpp"
#include "cocp/cond_dist.hpp"
#include "cocp/conformal.hpp"
#include "cocp/datagen.hpp"
#include "cocp/metrics.hpp"
#include "cocp/rng.hpp"
#include "json.hpp"

namespace cocp {

enum class Method { oracle, split, cqr, cocp };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::oracle: return "oracle";
    case Method::split: return "split";
    case Method::cqr: return "cqr";
    case Method::cocp: return "cocp";
  }
  throw std::invalid_argument("method_name: unknown method");
}

inline Method method_from_name(const std::string& name) {
  if (name == "oracle") return Method::oracle;
  if (name == "split") return Method::split;
  if (name == "cqr") return Method::cqr;
  if (name == "cocp") return Method::cocp;
  throw std::invalid_argument("unknown method '" + name + "'");
}

struct DatasetSpec {
  enum class Source { synthetic, csv };
  Source source = Source::synthetic;
  FamilyKind kind = FamilyKind::normal;
  Eigen::Index n = 20000;
  double lognormal_sigma = 0.6;
  CsvSpec csv;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<Method> methods{Method::oracle, Method::split, Method::cqr,
                              Method::cocp};
  double alpha = 0.1;
  int repetitions = 10;
  std::uint64_t base_seed = 1;
  CocpConfig cocp;
  BaselineConfig baseline;
  MetricsConfig metrics;
  std::string out_dir;  // empty: no files written

  void validate() const {
    if (methods.empty()) {
      throw std::invalid_argument("ExperimentConfig: methods must be nonempty");
    }
    for (std::size_t i = 0; i < methods.size(); ++i) {
      for (std::size_t j = i + 1; j < methods.size(); ++j) {
        if (methods[i] == methods[j]) {
          throw std::invalid_argument("ExperimentConfig: duplicate method " +
                                      method_name(methods[i]));
        }
      }
    }
    if (repetitions < 1) {
      throw std::invalid_argument("ExperimentConfig: repetitions must be >= 1");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
      throw std::invalid_argument("ExperimentConfig: alpha must be in (0,1)");
    }
    if (dataset.source == DatasetSpec::Source::csv) {
      if (dataset.csv.path.empty() || dataset.csv.target_column.empty()) {
        throw std::invalid_argument(
            "ExperimentConfig: csv dataset needs a path and a target column");
      }
      for (Method m : methods) {
        if (m == Method::oracle) {
          throw std::invalid_argument(
              "ExperimentConfig: the oracle method needs the synthetic "
              "conditional law and cannot run on csv data");
        }
      }
    }
    cocp.validate();
  }
};

struct RepRecord {
  Method method = Method::oracle;
  int rep = 0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  double train_seconds = 0.0;
  std::string status = "ok";

  bool ok() const { return status.rfind("ok", 0) == 0; }
};

struct ColumnStats {
  double mean = std::nan("");
  double stddev = std::nan("");
  int n = 0;
};

struct MethodSummary {
  Method method = Method::oracle;
  int n_total = 0;
  int n_ok = 0;
  ColumnStats coverage, length, conmae, msce, wsc, ert_l1, ert_l2,
      train_seconds;
};

struct ExperimentResult {
  std::vector<RepRecord> rows;
  std::vector<MethodSummary> summaries;
  std::string csv_path;
};

namespace detail {

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string sanitize_status(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

// Population std, matching descriptive mean (std) reporting; a single
// repetition reports std 0.
inline ColumnStats column_stats(const std::vector<double>& v) {
  ColumnStats s;
  s.n = int(v.size());
  if (v.empty()) return s;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= double(v.size());
  s.mean = mean;
  s.stddev = std::isfinite(var) ? std::sqrt(var) : std::nan("");
  return s;
}

}  // namespace detail

inline std::vector<MethodSummary> summarize(
    const std::vector<RepRecord>& rows, const std::vector<Method>& methods) {
  std::vector<MethodSummary> out;
  for (Method m : methods) {
    MethodSummary s;
    s.method = m;
    std::vector<double> cov, len, cm, ms, ws, e1, e2, ts;
    for (const RepRecord& r : rows) {
      if (r.method != m) continue;
      ++s.n_total;
      if (!r.ok()) continue;
      ++s.n_ok;
      cov.push_back(r.metrics.coverage);
      len.push_back(r.metrics.mean_length);
      if (r.metrics.conmae) cm.push_back(*r.metrics.conmae);
      ms.push_back(r.metrics.msce);
      ws.push_back(r.metrics.wsc);
      e1.push_back(r.metrics.ert_l1);
      e2.push_back(r.metrics.ert_l2);
      ts.push_back(r.train_seconds);
    }
    s.coverage = detail::column_stats(cov);
    s.length = detail::column_stats(len);
    s.conmae = detail::column_stats(cm);
    s.msce = detail::column_stats(ms);
    s.wsc = detail::column_stats(ws);
    s.ert_l1 = detail::column_stats(e1);
    s.ert_l2 = detail::column_stats(e2);
    s.train_seconds = detail::column_stats(ts);
    out.push_back(std::move(s));
  }
  return out;
}

inline Intervals oracle_intervals(const ConditionalFamily& fam,
                                  const Eigen::MatrixXd& X, double alpha) {
  Intervals iv;
  iv.lower.resize(X.rows());
  iv.upper.resize(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const HdiResult h = oracle_hdi(fam, X(i, 0), alpha);
    iv.lower[i] = h.lower;
    iv.upper[i] = h.upper;
  }
  return iv;
}

inline const char* kResultsCsvHeader =
    "method,rep,seed,coverage,length,conmae,msce,wsc,ert_l1,ert_l2,"
    "train_seconds,status";

inline std::string rep_record_csv(const RepRecord& r) {
  std::ostringstream os;
  os << method_name(r.method) << "," << r.rep << "," << r.seed << ",";
  if (r.ok()) {
    os << detail::fmt_g(r.metrics.coverage) << ","
       << detail::fmt_g(r.metrics.mean_length) << ","
       << (r.metrics.conmae ? detail::fmt_g(*r.metrics.conmae) : "") << ","
       << detail::fmt_g(r.metrics.msce) << ","
       << detail::fmt_g(r.metrics.wsc) << ","
       << detail::fmt_g(r.metrics.ert_l1) << ","
       << detail::fmt_g(r.metrics.ert_l2) << ",";
  } else {
    os << ",,,,,,,";
  }
  os << detail::fmt_g(r.train_seconds) << ","
     << detail::sanitize_status(r.status);
  return os.str();
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       std::ostream* log = nullptr,
                                       const std::string& csv_name = "results.csv") {
  cfg.validate();
  ExperimentResult result;
  std::ofstream csv;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    result.csv_path =
        (std::filesystem::path(cfg.out_dir) / csv_name).string();
    csv.open(result.csv_path);
    if (!csv) {
      throw std::runtime_error("run_experiment: cannot open " +
                               result.csv_path);
    }
    csv << kResultsCsvHeader << "\n" << std::flush;
  }

  // CSV data is parsed once; synthetic data is regenerated per repetition.
  CsvTable table;
  Dataset raw_csv;
  if (cfg.dataset.source == DatasetSpec::Source::csv) {
    table = read_csv(cfg.dataset.csv.path);
    raw_csv = dataset_from_table(table, cfg.dataset.csv);
  }

  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const std::uint64_t rep_seed = cfg.base_seed + std::uint64_t(rep);
    Dataset d;
    SplitPlan plan;
    if (cfg.dataset.source == DatasetSpec::Source::synthetic) {
      d = generate_synthetic(cfg.dataset.kind, cfg.dataset.n,
                             stream_seed(cfg.base_seed, std::uint64_t(rep),
                                         "data"),
                             cfg.dataset.lognormal_sigma);
      plan = make_split_plan(d.size(),
                             stream_seed(cfg.base_seed, std::uint64_t(rep),
                                         "split"),
                             cfg.cocp.folds);
    } else {
      plan = make_split_plan(raw_csv.size(),
                             stream_seed(cfg.base_seed, std::uint64_t(rep),
                                         "split"),
                             cfg.cocp.folds);
      const Preprocessor pre = fit_preprocessor(
          raw_csv, plan.pool_idx(), cfg.dataset.csv.log1p_target);
      d = apply_preprocessor(pre, raw_csv);
    }
    const Eigen::MatrixXd Xt = take_rows(d.X, plan.test_idx);
    const Eigen::VectorXd yt = take(d.y, plan.test_idx);
    const SyntheticProvenance* syn =
        d.synthetic() ? &d.synthetic_info() : nullptr;

    for (Method m : cfg.methods) {
      RepRecord rec;
      rec.method = m;
      rec.rep = rep;
      rec.seed = rep_seed;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        Intervals iv;
        switch (m) {
          case Method::oracle:
            iv = oracle_intervals(syn->family, Xt, cfg.alpha);
            break;
          case Method::split:
            iv = predict_interval(
                fit_split_baseline(d, plan, cfg.alpha, cfg.baseline,
                                   stream_seed(cfg.base_seed,
                                               std::uint64_t(rep),
                                               "split-model")),
                Xt);
            break;
          case Method::cqr:
            iv = predict_interval(
                fit_cqr_baseline(d, plan, cfg.alpha, cfg.baseline,
                                 stream_seed(cfg.base_seed,
                                             std::uint64_t(rep),
                                             "cqr-model")),
                Xt);
            break;
          case Method::cocp:
            iv = predict_interval(
                fit_cocp(d, plan, cfg.cocp,
                         stream_seed(cfg.base_seed, std::uint64_t(rep),
                                     "cocp"))
                    .model,
                Xt);
            break;
        }
        rec.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count();
        rec.metrics = evaluate_all(
            iv, Xt, yt, cfg.alpha, syn, cfg.metrics,
            stream_seed(cfg.base_seed, std::uint64_t(rep), "metrics"));
        rec.status = rec.metrics.ert_converged ? "ok" : "ok;ert-nonconverged";
      } catch (const std::exception& e) {
        rec.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t0)
                .count();
        rec.status = std::string("error:") + e.what();
      }
      if (csv.is_open()) {
        csv << rep_record_csv(rec) << "\n" << std::flush;
      }
      if (log) {
        *log << "rep " << rep << " " << method_name(m) << ": "
             << (rec.ok() ? "coverage=" + detail::fmt_g(rec.metrics.coverage) +
                                " length=" +
                                detail::fmt_g(rec.metrics.mean_length)
                          : rec.status)
             << " (" << detail::fmt_g(rec.train_seconds) << "s)\n"
             << std::flush;
      }
      result.rows.push_back(std::move(rec));
    }
  }
  result.summaries = summarize(result.rows, cfg.methods);
  return result;
}

inline void print_summary(const std::vector<MethodSummary>& summaries,
                          std::ostream& os) {
  const auto cell = [](const ColumnStats& s) {
    if (s.n == 0) return std::string("-");
    return detail::fmt_g(s.mean) + " (" + detail::fmt_g(s.stddev) + ")";
  };
  os << std::left << std::setw(8) << "method" << std::setw(22) << "coverage"
     << std::setw(22) << "length" << std::setw(22) << "conmae"
     << std::setw(22) << "msce" << std::setw(22) << "wsc" << std::setw(22)
     << "ert_l1" << std::setw(22) << "ert_l2" << std::setw(18)
     << "train_seconds" << "  ok\n";
  for (const MethodSummary& s : summaries) {
    os << std::left << std::setw(8) << method_name(s.method) << std::setw(22)
       << cell(s.coverage) << std::setw(22) << cell(s.length) << std::setw(22)
       << cell(s.conmae) << std::setw(22) << cell(s.msce) << std::setw(22)
       << cell(s.wsc) << std::setw(22) << cell(s.ert_l1) << std::setw(22)
       << cell(s.ert_l2) << std::setw(18) << cell(s.train_seconds) << "  "
       << s.n_ok << "/" << s.n_total << "\n";
  }
}

struct AblationRun {
  int alternations = 0;
  ExperimentResult result;
};

// One experiment per T value with identical seeds, so every T sees the same
// draws and splits. Only the alternating method runs.
inline std::vector<AblationRun> run_ablation_T(const ExperimentConfig& base,
                                               const std::vector<int>& t_values,
                                               std::ostream* log = nullptr) {
  if (t_values.empty()) {
    throw std::invalid_argument("run_ablation_T: no T values");
  }
  std::vector<AblationRun> runs;
  for (int t : t_values) {
    ExperimentConfig cfg = base;
    cfg.methods = {Method::cocp};
    cfg.cocp.alternations = t;
    if (log) *log << "== alternations T=" << t << "\n";
    AblationRun run;
    run.alternations = t;
    run.result = run_experiment(cfg, log,
                                "results_t" + std::to_string(t) + ".csv");
    runs.push_back(std::move(run));
  }
  if (!base.out_dir.empty()) {
    const std::string path =
        (std::filesystem::path(base.out_dir) / "ablation.csv").string();
    std::ofstream csv(path);
    if (!csv) throw std::runtime_error("run_ablation_T: cannot open " + path);
    csv << "t,reps_ok,length_mean,length_std,conmae_mean,conmae_std,"
           "train_seconds_mean,train_seconds_std\n";
    for (const AblationRun& run : runs) {
      const MethodSummary& s = run.result.summaries.front();
      csv << run.alternations << "," << s.n_ok << ","
          << detail::fmt_g(s.length.mean) << ","
          << detail::fmt_g(s.length.stddev) << ","
          << detail::fmt_g(s.conmae.mean) << ","
          << detail::fmt_g(s.conmae.stddev) << ","
          << detail::fmt_g(s.train_seconds.mean) << ","
          << detail::fmt_g(s.train_seconds.stddev) << "\n";
    }
  }
  return runs;
}

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       const std::vector<std::string>& allowed,
                       const std::string& context) {
  if (!j.is_object()) {
    throw std::invalid_argument("config: " + context + " must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " +
                                  context);
    }
  }
}

inline void parse_train_block(const nlohmann::json& j, TrainConfig& t,
                              const std::string& context) {
  check_keys(j, {"learning_rate", "batch_size", "max_epochs", "patience"},
             context);
  if (j.contains("learning_rate")) t.learning_rate = j["learning_rate"];
  if (j.contains("batch_size")) t.batch_size = j["batch_size"];
  if (j.contains("max_epochs")) t.max_epochs = j["max_epochs"];
  if (j.contains("patience")) t.patience = j["patience"];
}

}  // namespace detail

// Strict parse: unknown keys anywhere are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  detail::check_keys(j,
                     {"dataset", "methods", "alpha", "repetitions", "seed",
                      "cocp", "train", "metrics", "out"},
                     "top level");
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    if (d.contains("csv")) {
      detail::check_keys(d, {"csv", "target", "log1p", "features"},
                         "dataset");
      cfg.dataset.source = DatasetSpec::Source::csv;
      cfg.dataset.csv.path = d["csv"];
      if (d.contains("target")) {
        cfg.dataset.csv.target_column = d["target"];
      }
      if (d.contains("log1p")) cfg.dataset.csv.log1p_target = d["log1p"];
      if (d.contains("features")) {
        cfg.dataset.csv.feature_columns =
            d["features"].get<std::vector<std::string>>();
      }
    } else {
      detail::check_keys(d, {"kind", "n", "lognormal_sigma"}, "dataset");
      if (d.contains("kind")) {
        cfg.dataset.kind = family_from_name(d["kind"]);
      }
      if (d.contains("n")) cfg.dataset.n = d["n"].get<Eigen::Index>();
      if (d.contains("lognormal_sigma")) {
        cfg.dataset.lognormal_sigma = d["lognormal_sigma"];
      }
    }
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j["methods"]) {
      cfg.methods.push_back(method_from_name(m.get<std::string>()));
    }
  }
  if (j.contains("alpha")) cfg.alpha = j["alpha"];
  if (j.contains("repetitions")) cfg.repetitions = j["repetitions"];
  if (j.contains("seed")) cfg.base_seed = j["seed"].get<std::uint64_t>();
  if (j.contains("cocp")) {
    const auto& c = j["cocp"];
    detail::check_keys(
        c, {"folds", "alternations", "beta", "hidden", "center_val", "phase"},
        "cocp");
    if (c.contains("folds")) cfg.cocp.folds = c["folds"];
    if (c.contains("alternations")) cfg.cocp.alternations = c["alternations"];
    if (c.contains("beta")) cfg.cocp.beta = c["beta"];
    if (c.contains("hidden")) {
      cfg.cocp.hidden = c["hidden"].get<std::vector<int>>();
    }
    if (c.contains("center_val")) {
      const std::string v = c["center_val"];
      if (v == "soft_coverage") {
        cfg.cocp.center_val = CenterValMetric::soft_coverage;
      } else if (v == "mse") {
        cfg.cocp.center_val = CenterValMetric::mse;
      } else {
        throw std::invalid_argument("config: center_val must be "
                                    "'soft_coverage' or 'mse'");
      }
    }
    if (c.contains("phase")) {
      detail::parse_train_block(c["phase"], cfg.cocp.phase, "cocp.phase");
    }
  }
  if (j.contains("train")) {
    // Shared budget for the baseline nets, the warmup and the final radius
    // fit; alternation phases keep their reduced budget unless overridden.
    detail::parse_train_block(j["train"], cfg.baseline.train, "train");
    cfg.cocp.warmup = cfg.baseline.train;
    cfg.cocp.finetune = cfg.baseline.train;
  }
  if (j.contains("metrics")) {
    const auto& m = j["metrics"];
    detail::check_keys(m, {"clusters", "delta", "directions", "auditor_folds"},
                       "metrics");
    if (m.contains("clusters")) cfg.metrics.msce_clusters = m["clusters"];
    if (m.contains("delta")) cfg.metrics.wsc_delta = m["delta"];
    if (m.contains("directions")) {
      cfg.metrics.wsc_directions = m["directions"];
    }
    if (m.contains("auditor_folds")) cfg.metrics.ert_folds = m["auditor_folds"];
  }
  if (j.contains("out")) cfg.out_dir = j["out"];
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return config_from_json(j);
}

}  // namespace cocp
