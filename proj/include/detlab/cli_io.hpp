#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "detlab/errors.hpp"
#include "detlab/experiments.hpp"
#include "detlab/format.hpp"

namespace detlab {

// Raised instead of a config when the user asked for --help.
struct HelpRequested {
  std::string text;
};

inline void emit_csv(const std::vector<TrialRecord>& records, const std::string& path) {
  write_text_file(path, exp_detail::trial_csv_text(records));
}

inline void emit_csv(const std::vector<LemmaReport>& reports, const std::string& path) {
  write_text_file(path, exp_detail::lemma_csv_text(reports));
}

inline std::string trace_csv(const DecompositionTrace& trace) {
  return exp_detail::trace_csv_text(trace);
}

namespace cli_detail {

using nlohmann::json;

inline json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfig("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidConfig("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw InvalidConfig("config file " + path + " must hold a JSON object");
  return j;
}

inline long long require_int(const json& v, const std::string& key) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw InvalidConfig("config key '" + key + "' must be an integer");
  return v.get<long long>();
}

inline double require_num(const json& v, const std::string& key) {
  if (!v.is_number()) throw InvalidConfig("config key '" + key + "' must be a number");
  return v.get<double>();
}

inline std::string require_str(const json& v, const std::string& key) {
  if (!v.is_string()) throw InvalidConfig("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

// File layer of the merge: every recognized key assigns the matching config
// field; flags already recorded in `flag_set` win later, so the caller skips
// re-assignment there, not here.
inline void apply_config_file(ExperimentConfig& cfg, const json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "experiment") {
      experiment_from_name(require_str(value, key));  // subcommand wins; bad names still rejected
    } else if (key == "n_values") {
      if (!value.is_array()) throw InvalidConfig("config key 'n_values' must be an array");
      cfg.n_values.clear();
      for (const auto& item : value) cfg.n_values.push_back(static_cast<int>(require_int(item, key)));
    } else if (key == "trials") {
      cfg.trials = static_cast<int>(require_int(value, key));
      cfg.trials_explicit = true;
    } else if (key == "seed") {
      cfg.master_seed = static_cast<std::uint64_t>(require_int(value, key));
    } else if (key == "ensemble") {
      if (value.is_string()) {
        cfg.ensemble.kind = value.get<std::string>();
        atom_kind_from_name(cfg.ensemble.kind);
      } else if (value.is_object()) {
        cfg.ensemble = value.get<EnsembleDescriptor>();
      } else {
        throw InvalidConfig("config key 'ensemble' must be a name or an object");
      }
      cfg.ensemble_explicit = true;
    } else if (key == "eps") {
      cfg.ensemble.eps = require_num(value, key);
      cfg.ensemble_explicit = true;
    } else if (key == "level") {
      cfg.ensemble.level = require_num(value, key);
      cfg.ensemble_explicit = true;
    } else if (key == "tail") {
      cfg.tail_block_override = static_cast<int>(require_int(value, key));
    } else if (key == "workers") {
      cfg.workers = static_cast<int>(require_int(value, key));
    } else if (key == "out") {
      cfg.output_dir = require_str(value, key);
    } else {
      throw InvalidConfig("unknown config key: " + key);
    }
  }
}

}  // namespace cli_detail

// Merges subcommand, optional JSON file (--config), and flags; flags beat
// file values, both beat defaults. Returns a fully validated config.
inline ExperimentConfig parse_config(const std::vector<std::string>& args) {
  CLI::App app{"numerical laboratory for log-determinants of random square matrices"};
  app.require_subcommand(1);

  std::vector<int> n_values;
  int trials = 0;
  std::uint64_t seed = 42;
  std::string ensemble;
  double eps = 0.0;
  double level = 0.0;
  int tail = 0;
  int workers = 0;
  std::string out_dir;
  std::string config_path;

  for (const char* name : {"clt", "rate", "replace", "hybrid", "lemmas", "decompose", "verify"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--n", n_values, "matrix sizes");
    sub->add_option("--trials", trials, "trials per size");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--ensemble", ensemble, "atom law: bernoulli | gaussian | uniform_scaled");
    sub->add_option("--eps", eps, "smoothing weight in [0, 1)");
    sub->add_option("--level", level, "truncation level (entries clipped then restandardized)");
    sub->add_option("--tail", tail, "rows replaced by gaussian atoms (hybrid/replace)");
    sub->add_option("--workers", workers, "worker threads, 0 = hardware");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--config", config_path, "JSON config file");
  }

  std::vector<const char*> argv;
  argv.push_back("detlab");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::ParseError& e) {
    throw InvalidConfig(e.what());
  }

  CLI::App* sub = app.get_subcommands().front();
  ExperimentConfig cfg;
  cfg.experiment = experiment_from_name(sub->get_name());
  cfg.n_values = default_n_values(cfg.experiment);
  cfg.trials = default_trials(cfg.experiment);

  if (sub->count("--config") > 0)
    cli_detail::apply_config_file(cfg, cli_detail::load_config_file(config_path));

  if (sub->count("--n") > 0) cfg.n_values = n_values;
  if (sub->count("--trials") > 0) {
    cfg.trials = trials;
    cfg.trials_explicit = true;
  }
  if (sub->count("--seed") > 0) cfg.master_seed = seed;
  if (sub->count("--ensemble") > 0) {
    atom_kind_from_name(ensemble);
    cfg.ensemble.kind = ensemble;
    cfg.ensemble_explicit = true;
  }
  if (sub->count("--eps") > 0) {
    cfg.ensemble.eps = eps;
    cfg.ensemble_explicit = true;
  }
  if (sub->count("--level") > 0) {
    cfg.ensemble.level = level;
    cfg.ensemble_explicit = true;
  }
  if (sub->count("--tail") > 0) cfg.tail_block_override = tail;
  if (sub->count("--workers") > 0) cfg.workers = workers;
  if (sub->count("--out") > 0) cfg.output_dir = out_dir;

  normalize_config(cfg);
  return cfg;
}

namespace cli_detail {

inline json report_json(const RunReport& report) {
  json j;
  j["experiment"] = experiment_name(report.config.experiment);
  j["ensemble"] = json(report.config.ensemble);
  j["n_values"] = report.config.n_values;
  j["trials"] = report.config.trials;
  j["seed"] = report.config.master_seed;
  j["suite_pass"] = report.suite_pass;
  if (std::isfinite(report.fitted_exponent)) j["fitted_exponent"] = report.fitted_exponent;
  json per_n = json::array();
  for (const NReport& r : report.per_n) {
    json row;
    row["n"] = r.n;
    row["trials"] = r.trials;
    row["retained"] = r.retained;
    row["singular"] = r.singular_count;
    row["ks_d"] = r.ks.d;
    if (std::isfinite(r.mean)) row["mean"] = r.mean;
    if (std::isfinite(r.variance)) row["variance"] = r.variance;
    if (!r.trial_csv.empty()) row["trial_csv"] = r.trial_csv;
    if (!r.extra_csv.empty()) row["second_arm_csv"] = r.extra_csv;
    if (!r.hist_svg.empty()) row["histogram_svg"] = r.hist_svg;
    if (r.taylor_mean) {
      row["taylor_mean"] = {{"sum_x", r.taylor_mean->sum_x},
                            {"sum_half_x_sq", r.taylor_mean->sum_half_x_sq},
                            {"sum_r", r.taylor_mean->sum_r}};
    }
    if (r.martingale) {
      row["martingale"] = {{"s_sq", r.martingale->s_sq},
                           {"v_sq", r.martingale->v_sq},
                           {"gamma_max", r.martingale->gamma_max},
                           {"traces_used", r.martingale->traces_used},
                           {"traces_skipped", r.martingale->traces_skipped}};
    }
    per_n.push_back(std::move(row));
  }
  j["per_n"] = std::move(per_n);
  json checks = json::array();
  for (const CheckResult& c : report.checks) {
    checks.push_back({{"name", c.name},
                      {"observed", c.observed},
                      {"limit", c.limit},
                      {"pass", c.pass},
                      {"detail", c.detail}});
  }
  j["checks"] = std::move(checks);
  if (!report.lemma_csv.empty()) {
    j["lemma_csv"] = report.lemma_csv;
    std::size_t failed = 0;
    for (const LemmaReport& r : report.lemma_reports)
      if (!r.pass) ++failed;
    j["lemma_checks"] = report.lemma_reports.size();
    j["lemma_failures"] = failed;
  }
  return j;
}

inline void print_report(const RunReport& report, std::ostream& os) {
  for (const NReport& r : report.per_n) {
    os << "n=" << r.n << " trials=" << r.trials << " retained=" << r.retained
       << " singular=" << r.singular_count << " ks_d=" << diag_detail::fmt(r.ks.d);
    if (std::isfinite(r.mean))
      os << " mean=" << diag_detail::fmt(r.mean) << " var=" << diag_detail::fmt(r.variance);
    if (r.martingale)
      os << " s_sq=" << diag_detail::fmt(r.martingale->s_sq)
         << " v_sq=" << diag_detail::fmt(r.martingale->v_sq)
         << " gamma_max=" << diag_detail::fmt(r.martingale->gamma_max);
    os << "\n";
  }
  if (std::isfinite(report.fitted_exponent))
    os << "fitted_exponent=" << diag_detail::fmt(report.fitted_exponent)
       << " (ln KS distance against ln ln n)\n";
  for (const LemmaReport& r : report.lemma_reports) {
    os << (r.pass ? "PASS " : "FAIL ") << r.lemma_id << " n=" << r.n
       << " observed=" << diag_detail::fmt(r.observed)
       << " predicted=" << diag_detail::fmt(r.predicted) << " (" << r.notes << ")\n";
  }
  for (const CheckResult& c : report.checks) {
    os << (c.pass ? "PASS " : "FAIL ") << c.name << " observed=" << diag_detail::fmt(c.observed)
       << " limit=" << diag_detail::fmt(c.limit) << " (" << c.detail << ")\n";
  }
  os << (report.suite_pass ? "suite: PASS\n" : "suite: FAIL\n");
}

}  // namespace cli_detail

// Full command dispatch. Returns the process exit code: 0 all checks pass,
// 1 some check failed, 2 bad configuration, 3 I/O failure.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = parse_config(args);
  } catch (const HelpRequested& h) {
    out << h.text;
    return 0;
  } catch (const InvalidConfig& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 3;
  }

  try {
    switch (cfg.experiment) {
      case ExperimentKind::verify: {
        const std::vector<CheckResult> checks = run_verify();
        bool all = true;
        for (const CheckResult& c : checks) {
          out << (c.pass ? "PASS " : "FAIL ") << c.name
              << " observed=" << diag_detail::fmt(c.observed)
              << " expected=" << diag_detail::fmt(c.limit) << "\n";
          all = all && c.pass;
        }
        out << (all ? "verify: PASS\n" : "verify: FAIL\n");
        return all ? 0 : 1;
      }
      case ExperimentKind::decompose: {
        const DecompositionTrace trace = run_decompose(cfg);
        out << trace_csv(trace);
        if (trace.degenerate)
          err << "trace degenerate at row " << trace.degenerate_at << "\n";
        return 0;
      }
      default: {
        RunReport report;
        switch (cfg.experiment) {
          case ExperimentKind::clt: report = run_clt(cfg); break;
          case ExperimentKind::rate: report = run_rate(cfg); break;
          case ExperimentKind::replace: report = run_replacement(cfg); break;
          case ExperimentKind::hybrid: report = run_hybrid(cfg); break;
          case ExperimentKind::lemmas: report = run_lemma_suite(cfg); break;
          default: throw InvalidConfig("unreachable experiment kind");
        }
        const std::string report_path = exp_detail::out_path(
            cfg, std::string(experiment_name(cfg.experiment)) + "_report.json");
        write_text_file(report_path, cli_detail::report_json(report).dump(2) + "\n");
        cli_detail::print_report(report, out);
        out << "report: " << report_path << "\n";
        return report.suite_pass ? 0 : 1;
      }
    }
  } catch (const InvalidConfig& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateDistribution& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace detlab
