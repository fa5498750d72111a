// Command-line runner: seeded experiments (`run`, `oracle`), the T ablation
// (`ablate-t`), and the numerical verification suite (`theory`). Outputs are
// per-repetition CSV rows plus printed mean (std) summaries.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cocp/experiment.hpp"
#include "cocp/theory_lab.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string dataset;
  std::string methods;
  std::string out;
  double alpha = 0.1;
  int reps = 10;
  std::uint64_t seed = 1;
};

void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config, "JSON config file");
  sub->add_option("--dataset", o.dataset,
                  "synthetic dataset kind[:n], kind in "
                  "{normal, lognormal, exponential}; csv datasets go "
                  "through --config");
  sub->add_option("--alpha", o.alpha, "miscoverage level");
  sub->add_option("--reps", o.reps, "number of repetitions");
  sub->add_option("--seed", o.seed, "base seed");
  sub->add_option("--out", o.out, "output directory for CSV files");
}

cocp::DatasetSpec parse_dataset(const std::string& s) {
  cocp::DatasetSpec d;
  const auto colon = s.find(':');
  d.kind = cocp::family_from_name(s.substr(0, colon));
  if (colon != std::string::npos) {
    d.n = static_cast<Eigen::Index>(std::stoll(s.substr(colon + 1)));
  }
  return d;
}

std::vector<cocp::Method> parse_methods(const std::string& s) {
  std::vector<cocp::Method> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    if (end > start) {
      out.push_back(cocp::method_from_name(s.substr(start, end - start)));
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

cocp::ExperimentConfig build_config(const CommonOpts& o, const CLI::App* sub) {
  cocp::ExperimentConfig cfg;
  if (!o.config.empty()) cfg = cocp::load_config(o.config);
  if (sub->count("--dataset") > 0) cfg.dataset = parse_dataset(o.dataset);
  if (sub->count("--alpha") > 0) cfg.alpha = o.alpha;
  if (sub->count("--reps") > 0) cfg.repetitions = o.reps;
  if (sub->count("--seed") > 0) cfg.base_seed = o.seed;
  if (sub->count("--out") > 0) cfg.out_dir = o.out;
  return cfg;
}

std::string stat_cell(const cocp::ColumnStats& s) {
  if (s.n == 0) return "-";
  return cocp::detail::fmt_g(s.mean) + " (" + cocp::detail::fmt_g(s.stddev) +
         ")";
}

int run_theory(std::uint64_t seed, double psi_bias, bool quick,
               const std::string& out) {
  cocp::TheorySuiteConfig cfg;
  cfg.seed = seed;
  cfg.psi_bias = psi_bias;
  cfg.train_decomposition_model = !quick;
  const cocp::TheorySuiteReport rep = cocp::run_theory_suite(cfg);
  std::cout << std::left << std::setw(46) << "check" << std::setw(16)
            << "value" << std::setw(16) << "reference" << std::setw(12)
            << "tolerance" << "result\n";
  for (const auto& r : rep.rows) {
    std::cout << std::left << std::setw(46) << r.name << std::setw(16)
              << cocp::detail::fmt_g(r.value) << std::setw(16)
              << cocp::detail::fmt_g(r.reference) << std::setw(12)
              << cocp::detail::fmt_g(r.tolerance)
              << (r.pass ? "pass" : "FAIL") << "\n";
  }
  std::cout << (rep.all_pass ? "all checks passed" : "CHECKS FAILED")
            << " (" << rep.rows.size() << " rows)\n";
  if (!out.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) {
      rows.push_back({{"name", r.name},
                      {"inputs", r.inputs},
                      {"value", r.value},
                      {"reference", r.reference},
                      {"tolerance", r.tolerance},
                      {"kind", r.kind == cocp::CheckKind::abs_diff
                                   ? "abs_diff"
                                   : "upper_bound"},
                      {"pass", r.pass}});
    }
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot open " + out);
    f << nlohmann::json{{"rows", rows}, {"all_pass", rep.all_pass}}.dump(2)
      << "\n";
  }
  return rep.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive conformal interval experiments"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  CLI::App* run_cmd =
      app.add_subcommand("run", "run methods over seeded repetitions");
  add_common(run_cmd, run_opts);
  run_cmd->add_option("--methods", run_opts.methods,
                      "comma-separated subset of oracle,split,cqr,cocp");

  CommonOpts oracle_opts;
  CLI::App* oracle_cmd =
      app.add_subcommand("oracle", "evaluate the closed-form oracle only");
  add_common(oracle_cmd, oracle_opts);

  CommonOpts ablate_opts;
  std::vector<int> t_values{0, 1, 2, 3, 4, 5};
  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate-t", "rerun the alternating trainer at several T, shared seeds");
  add_common(ablate_cmd, ablate_opts);
  ablate_cmd->add_option("--t-values", t_values, "comma-separated alternation counts")
      ->delimiter(',');

  std::uint64_t theory_seed = cocp::TheorySuiteConfig{}.seed;
  double psi_bias = 1.0;
  bool theory_quick = false;
  std::string theory_out;
  CLI::App* theory_cmd =
      app.add_subcommand("theory", "numerical verification suite");
  theory_cmd->add_option("--seed", theory_seed, "suite seed");
  theory_cmd->add_option("--psi-bias", psi_bias,
                         "multiplicative fault injected into the folded-"
                         "radius solver (negative control; 1 = off)");
  theory_cmd->add_flag("--quick", theory_quick,
                       "substitute perturbed closed-form components for the "
                       "trained model in the decomposition check");
  theory_cmd->add_option("--out", theory_out, "JSON report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed() || oracle_cmd->parsed()) {
      const CommonOpts& o = run_cmd->parsed() ? run_opts : oracle_opts;
      const CLI::App* sub = run_cmd->parsed() ? run_cmd : oracle_cmd;
      cocp::ExperimentConfig cfg = build_config(o, sub);
      if (oracle_cmd->parsed()) {
        cfg.methods = {cocp::Method::oracle};
      } else if (sub->count("--methods") > 0) {
        cfg.methods = parse_methods(o.methods);
      }
      const cocp::ExperimentResult res = cocp::run_experiment(cfg, &std::cout);
      cocp::print_summary(res.summaries, std::cout);
      if (!res.csv_path.empty()) {
        std::cout << "per-rep rows: " << res.csv_path << "\n";
      }
      return 0;
    }
    if (ablate_cmd->parsed()) {
      cocp::ExperimentConfig cfg = build_config(ablate_opts, ablate_cmd);
      const auto runs = cocp::run_ablation_T(cfg, t_values, &std::cout);
      std::cout << std::left << std::setw(4) << "T" << std::setw(24)
                << "length" << std::setw(24) << "conmae" << std::setw(20)
                << "train_seconds" << "ok\n";
      for (const auto& run : runs) {
        const cocp::MethodSummary& s = run.result.summaries.front();
        std::cout << std::left << std::setw(4) << run.alternations
                  << std::setw(24) << stat_cell(s.length) << std::setw(24)
                  << stat_cell(s.conmae) << std::setw(20)
                  << stat_cell(s.train_seconds) << s.n_ok << "/" << s.n_total
                  << "\n";
      }
      return 0;
    }
    if (theory_cmd->parsed()) {
      return run_theory(theory_seed, psi_bias, theory_quick, theory_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
