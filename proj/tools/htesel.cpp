// htesel command-line driver: simulate, sweep, select, diagnose.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "htesel/error.hpp"
#include "htesel/harness.hpp"
#include "htesel/io.hpp"
#include "htesel/report.hpp"

namespace fs = std::filesystem;
using namespace htesel;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string selectors;
  std::optional<double> alpha;
  std::optional<double> lambda;
  std::optional<int> inner_folds;
  std::optional<int> reps;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, Common& c, bool experiment) {
  cmd->add_option("--config", c.config, "JSON config file");
  cmd->add_option("--seed", c.seed, "Base seed");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--selectors", c.selectors, "Comma list: naive,bonferroni,proposed,ablation");
  cmd->add_option("--alpha", c.alpha, "Significance level");
  cmd->add_option("--lambda", c.lambda, "Weighting temperature (default n^0.4)");
  cmd->add_option("--inner-folds", c.inner_folds, "Inner folds per major fold");
  if (experiment) {
    cmd->add_option("--reps", c.reps, "Repetitions");
    cmd->add_option("--workers", c.workers, "Worker threads (0 = all cores)");
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void apply_selector_flags(const Common& c, SelectorConfig& cfg) {
  if (c.alpha) cfg.alpha = *c.alpha;
  if (c.lambda) cfg.lambda = *c.lambda;
  if (c.inner_folds) cfg.inner_folds = *c.inner_folds;
}

json config_json(const Common& c) {
  return c.config.empty() ? json::object() : load_json_file(c.config);
}

ExperimentConfig experiment_config(const json& j, const Common& c) {
  json base = j;
  base.erase("sweep");
  base.erase("clt");
  base.erase("stability");
  ExperimentConfig cfg = experiment_config_from_json(base);
  if (!c.selectors.empty()) {
    const SelectorConfig shared = cfg.selectors.front().config;
    cfg.selectors.clear();
    for (const auto& name : split_list(c.selectors)) {
      cfg.selectors.push_back({parse_selector(name), shared, {}});
    }
  }
  for (auto& s : cfg.selectors) apply_selector_flags(c, s.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.reps) cfg.repetitions = *c.reps;
  if (c.workers) cfg.workers = *c.workers;
  if (!c.out.empty()) cfg.output = c.out;
  if (cfg.output.empty()) cfg.output = ".";
  cfg.validate();
  return cfg;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json metadata(const char* command, double seconds, int workers) {
  return {{"command", command},
          {"finished_utc", utc_now()},
          {"elapsed_seconds", seconds},
          {"workers", workers}};
}

void print_summary(const ExperimentReport& r) {
  std::cout << fmt::format("p={} winner={} reps={}\n", r.p, r.winner, r.config.repetitions);
  for (const auto& s : r.summaries) {
    std::cout << fmt::format("  {:<12} FWER {:.3f} [{:.3f}, {:.3f}]  ANWS {:.3f} [{:.3f}, {:.3f}]  failures {}\n",
                             s.name, s.fwer, s.fwer_ci.lower, s.fwer_ci.upper, s.anws,
                             s.anws_ci.lower, s.anws_ci.upper, s.failures);
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_simulate(const Common& c, bool export_data) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = experiment_config(config_json(c), c);
  const ExperimentReport report = run_experiment(cfg);
  write_experiment(report, cfg.output, metadata("simulate", seconds_since(t0), cfg.workers));
  if (export_data) {
    // Repetition 0 as plain CSVs, ready for `htesel select`.
    const Trial trial = make_trial(cfg, 0);
    std::ostringstream data;
    std::ostringstream preds;
    write_dataset_csv(data, trial.data());
    write_predictions_csv(preds, trial.candidates());
    write_text_file(fs::path(cfg.output) / "data.csv", data.str());
    write_text_file(fs::path(cfg.output) / "preds.csv", preds.str());
  }
  print_summary(report);
  std::cout << "wrote " << (fs::path(cfg.output) / "report.json").string() << "\n";
  return 0;
}

int run_sweep(const Common& c, std::string axis_flag, std::string values_flag) {
  const auto t0 = std::chrono::steady_clock::now();
  const json j = config_json(c);
  const ExperimentConfig cfg = experiment_config(j, c);
  std::vector<double> values;
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    try {
      if (axis_flag.empty() && s.contains("axis")) axis_flag = s.at("axis").get<std::string>();
      if (values_flag.empty() && s.contains("values")) values = s.at("values").get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ConfigError("sweep block needs a string 'axis' and a numeric 'values' list");
    }
  }
  if (!values_flag.empty()) {
    values.clear();
    for (const auto& v : split_list(values_flag)) {
      try {
        values.push_back(std::stod(v));
      } catch (const std::exception&) {
        throw ConfigError(fmt::format("bad sweep value '{}'", v));
      }
    }
  }
  if (axis_flag.empty()) throw ConfigError("sweep needs --axis or a sweep.axis config entry");
  const SweepAxis axis = parse_sweep_axis(axis_flag);
  const auto reports = sweep(cfg, axis, values);
  const fs::path dir = cfg.output;
  for (std::size_t k = 0; k < reports.size(); ++k) {
    write_experiment(reports[k], dir / fmt::format("point_{}", k),
                     metadata("sweep", seconds_since(t0), cfg.workers));
  }
  write_text_file(dir / "sweep.json", sweep_to_json(axis, values, reports).dump(2) + "\n");
  std::ostringstream csv;
  csv << "value,selector,fwer,fwer_lo,fwer_hi,anws,anws_lo,anws_hi,failures\n";
  for (std::size_t k = 0; k < reports.size(); ++k) {
    for (const auto& s : reports[k].summaries) {
      csv << fmt::format("{},{},{},{},{},{},{},{},{}\n", values[k], s.name, s.fwer, s.fwer_ci.lower,
                         s.fwer_ci.upper, s.anws, s.anws_ci.lower, s.anws_ci.upper, s.failures);
    }
  }
  write_text_file(dir / "sweep.csv", csv.str());
  write_text_file(dir / "metadata.json", metadata("sweep", seconds_since(t0), cfg.workers).dump(2) + "\n");
  for (std::size_t k = 0; k < reports.size(); ++k) {
    std::cout << fmt::format("{} = {}: ", sweep_axis_name(axis), values[k]);
    print_summary(reports[k]);
  }
  return 0;
}

int run_select(const Common& c, const std::string& data_path, const std::string& preds_path,
               const std::string& tensor_path, int bootstrap_draws) {
  if (data_path.empty() || preds_path.empty()) {
    throw ConfigError("select needs --data and --preds");
  }
  const json j = config_json(c);
  NuisanceConfig nuisance;
  if (j.contains("nuisance")) {
    json sub{{"nuisance", j.at("nuisance")}};
    nuisance = experiment_config_from_json(sub).nuisance;
  }
  SelectorConfig cfg;
  apply_selector_flags(c, cfg);
  if (c.seed) cfg.seed = *c.seed;
  cfg.bootstrap_draws = bootstrap_draws;
  cfg.validate();
  nuisance.validate();

  const Dataset data = read_dataset_csv(fs::path(data_path));
  const CandidateSet candidates = read_predictions_csv(fs::path(preds_path), data.n());
  const std::vector<std::string> names =
      c.selectors.empty() ? std::vector<std::string>{"proposed"} : split_list(c.selectors);

  json results = json::array();
  std::optional<CrossFit> shared;
  for (const auto& name : names) {
    const SelectorKind kind = parse_selector(name);
    if (kind == SelectorKind::Ablation) {
      results.push_back(to_json(single_layer_ablation_select(data, candidates, cfg, nuisance)));
      continue;
    }
    if (!shared) shared = selector_cross_fit(data, candidates, cfg, nuisance);
    switch (kind) {
      case SelectorKind::Naive: results.push_back(to_json(naive_from_tensor(shared->tensor, cfg))); break;
      case SelectorKind::Bonferroni:
        results.push_back(to_json(bonferroni_from_tensor(shared->tensor, cfg)));
        break;
      default: results.push_back(to_json(proposed_from_tensor(shared->tensor, shared->split, cfg)));
    }
  }
  if (!tensor_path.empty()) {
    if (!shared) shared = selector_cross_fit(data, candidates, cfg, nuisance);
    std::ostringstream out;
    write_tensor_csv(out, shared->tensor);
    write_text_file(tensor_path, out.str());
  }
  const json out = results.size() == 1 ? results.front() : results;
  if (!c.out.empty()) write_text_file(fs::path(c.out) / "selection.json", out.dump(2) + "\n");
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_diagnose(const Common& c, const std::string& kind) {
  const auto t0 = std::chrono::steady_clock::now();
  json j = config_json(c);
  // Flags feed both diagnostic configs through the experiment block.
  if (c.seed) j["seed"] = *c.seed;
  if (c.alpha) j["alpha"] = *c.alpha;
  if (c.lambda) j["lambda"] = *c.lambda;
  if (c.inner_folds) j["inner_folds"] = *c.inner_folds;
  if (c.workers) j["workers"] = *c.workers;
  if (!c.selectors.empty()) j["selectors"] = split_list(c.selectors);
  const fs::path dir = !c.out.empty() ? fs::path(c.out)
                       : j.contains("output") ? fs::path(j.at("output").get<std::string>())
                                               : fs::path(".");
  if (kind == "clt") {
    CltConfig cfg = clt_config_from_json(j);
    if (c.reps) cfg.datasets = *c.reps;
    const CltReport r = clt_diagnostic(cfg);
    write_text_file(dir / "clt.json", to_json(r).dump(2) + "\n");
    std::ostringstream csv;
    csv << "rep,r,s,skipped,ks_statistic,p_value,adjusted_p\n";
    for (const auto& d : r.datasets) {
      for (const auto& p : d.pairs) {
        csv << fmt::format("{},{},{},{},{},{},{}\n", d.rep, p.r, p.s, p.skipped ? 1 : 0, p.statistic,
                           p.p_value, p.adjusted);
      }
    }
    write_text_file(dir / "clt_pairs.csv", csv.str());
    std::cout << fmt::format("rejection share {:.3f} over {} datasets; standardized KS p = {:.4f}\n",
                             r.rejection_share, r.datasets.size(), r.standardized_ks.p_value);
  } else if (kind == "stability") {
    std::vector<std::size_t> grid;
    const StabilityConfig cfg = stability_config_from_json(j, grid);
    const StabilityReport r = stability_diagnostic(grid, cfg);
    write_text_file(dir / "stability.json", to_json(r).dump(2) + "\n");
    std::ostringstream csv;
    csv << "n,lambda,delta1_sq,delta2_sq\n";
    for (const auto& p : r.points) {
      csv << fmt::format("{},{},{},{}\n", p.n, p.lambda, p.delta1_sq, p.delta2_sq);
    }
    write_text_file(dir / "stability.csv", csv.str());
    std::cout << fmt::format("slope1 {}  slope2 {}\n",
                             r.slope1 ? fmt::format("{:.3f}", *r.slope1) : "n/a",
                             r.slope2 ? fmt::format("{:.3f}", *r.slope2) : "n/a");
  } else {
    throw ConfigError(fmt::format("unknown diagnostic '{}' (expected clt or stability)", kind));
  }
  write_text_file(dir / "metadata.json",
                  metadata("diagnose", seconds_since(t0), j.value("workers", 0)).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Select the best treatment-effect estimator among candidates"};
  app.require_subcommand(1);

  Common sim_opts;
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo experiment");
  add_common(sim, sim_opts, true);
  bool export_data = false;
  sim->add_flag("--export-data", export_data, "Also write data.csv and preds.csv of repetition 0");

  Common sweep_opts;
  std::string axis;
  std::string values;
  auto* sw = app.add_subcommand("sweep", "Run an experiment over a grid of one parameter");
  add_common(sw, sweep_opts, true);
  sw->add_option("--axis", axis, "candidate_count or sample_fraction");
  sw->add_option("--values", values, "Comma-separated increasing values");

  Common sel_opts;
  std::string data_path;
  std::string preds_path;
  std::string tensor_path;
  int draws = 10000;
  auto* sel = app.add_subcommand("select", "Select among candidates on a dataset");
  add_common(sel, sel_opts, false);
  sel->add_option("--data", data_path, "Dataset CSV (x_0..x_{d-1},t,y)");
  sel->add_option("--preds", preds_path, "Predictions CSV (tau_0..tau_{p-1})");
  sel->add_option("--tensor", tensor_path, "Also dump the score tensor to this CSV");
  sel->add_option("--bootstrap-draws", draws, "Gaussian draws for the naive critical value");

  Common diag_opts;
  std::string kind = "clt";
  auto* diag = app.add_subcommand("diagnose", "CLT or stability diagnostics");
  add_common(diag, diag_opts, true);
  diag->add_option("--kind", kind, "clt or stability");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*sim) return run_simulate(sim_opts, export_data);
    if (*sw) return run_sweep(sweep_opts, axis, values);
    if (*sel) return run_select(sel_opts, data_path, preds_path, tensor_path, draws);
    if (*diag) return run_diagnose(diag_opts, kind);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
