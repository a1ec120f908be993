#include "htesel/report.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "htesel/error.hpp"

namespace htesel {

namespace {

// Non-finite doubles become JSON null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json interval(const stats::Interval& ci) { return {num(ci.lower), num(ci.upper)}; }

void check_keys(const json& j, const std::set<std::string>& allowed, std::string_view where) {
  if (!j.is_object()) throw ConfigError(fmt::format("{} must be a JSON object", where));
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(fmt::format("unknown key '{}' in {}", key, where));
  }
}

template <class T>
T get(const json& j, const char* key, std::string_view where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("bad value for '{}' in {}", key, where));
  }
}

template <class T>
void read(const json& j, const char* key, T& out, std::string_view where = "config") {
  if (j.contains(key)) out = get<T>(j, key, where);
}

template <class T>
void read(const json& j, const char* key, std::optional<T>& out, std::string_view where = "config") {
  if (j.contains(key)) {
    if (j.at(key).is_null()) {
      out.reset();
    } else {
      out = get<T>(j, key, where);
    }
  }
}

ToyDims dims_from_json(const json& j) {
  ToyDims d;
  if (j.is_array()) {
    if (j.size() != 4) throw ConfigError("dims must list four block sizes");
    try {
      d = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
    } catch (const json::exception&) {
      throw ConfigError("dims entries must be integers");
    }
    return d;
  }
  check_keys(j, {"instrument", "confounder", "adjustment", "distractor"}, "dims");
  read(j, "instrument", d.instrument, "dims");
  read(j, "confounder", d.confounder, "dims");
  read(j, "adjustment", d.adjustment, "dims");
  read(j, "distractor", d.distractor, "dims");
  return d;
}

std::vector<NoiseSpec> noise_from_json(const json& j) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "similar") return similar_specs();
    if (name == "competitive_inferior") return competitive_inferior_specs();
    throw ConfigError(fmt::format("unknown noise preset '{}'", name));
  }
  if (!j.is_array()) throw ConfigError("noise must be a preset name or a list of {mean, sd}");
  std::vector<NoiseSpec> out;
  for (const auto& e : j) {
    check_keys(e, {"mean", "sd"}, "noise entry");
    NoiseSpec s;
    read(e, "mean", s.mean, "noise entry");
    read(e, "sd", s.sd, "noise entry");
    out.push_back(s);
  }
  return out;
}

NuisanceConfig nuisance_from_json(const json& j) {
  check_keys(j, {"ridge_lambda", "logistic_l2", "clip_eta", "max_iter", "tol"}, "nuisance");
  NuisanceConfig c;
  read(j, "ridge_lambda", c.ridge_lambda, "nuisance");
  read(j, "logistic_l2", c.logistic_l2, "nuisance");
  read(j, "clip_eta", c.clip_eta, "nuisance");
  read(j, "max_iter", c.max_iter, "nuisance");
  read(j, "tol", c.tol, "nuisance");
  return c;
}

void selector_overrides(const json& j, SelectorConfig& c, std::string_view where) {
  read(j, "alpha", c.alpha, where);
  read(j, "lambda", c.lambda, where);
  read(j, "inner_folds", c.inner_folds, where);
  read(j, "bootstrap_draws", c.bootstrap_draws, where);
  read(j, "seed", c.seed, where);
}

const std::set<std::string> kTopKeys = {
    "n",          "dims",          "noise",           "selectors",   "alpha",
    "lambda",     "inner_folds",   "bootstrap_draws", "nuisance",    "oracle_nuisance",
    "repetitions", "seed",         "sample_fraction", "ci_resamples", "workers",
    "output",     "sweep",         "clt",             "stability"};

json selector_config_json(const SelectorConfig& c) {
  json j{{"alpha", c.alpha},
         {"inner_folds", c.inner_folds},
         {"bootstrap_draws", c.bootstrap_draws},
         {"seed", c.seed}};
  j["lambda"] = c.lambda ? json(*c.lambda) : json(nullptr);
  return j;
}

}  // namespace

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("invalid JSON in {}: {}", path.string(), e.what()));
  }
}

ExperimentConfig experiment_config_from_json(const json& j) {
  check_keys(j, kTopKeys, "config");
  ExperimentConfig c;
  read(j, "n", c.n);
  if (j.contains("dims")) c.dims = dims_from_json(j.at("dims"));
  if (j.contains("noise")) c.noise = noise_from_json(j.at("noise"));
  if (j.contains("nuisance")) c.nuisance = nuisance_from_json(j.at("nuisance"));
  read(j, "oracle_nuisance", c.oracle_nuisance);
  read(j, "repetitions", c.repetitions);
  read(j, "seed", c.seed);
  read(j, "sample_fraction", c.sample_fraction);
  read(j, "ci_resamples", c.ci_resamples);
  read(j, "workers", c.workers);
  read(j, "output", c.output);

  SelectorConfig shared;
  selector_overrides(j, shared, "config");
  shared.seed = 0;
  if (j.contains("selectors")) {
    const json& list = j.at("selectors");
    if (!list.is_array() || list.empty()) throw ConfigError("selectors must be a nonempty list");
    c.selectors.clear();
    for (const auto& e : list) {
      SelectorSpec spec;
      spec.config = shared;
      if (e.is_string()) {
        spec.kind = parse_selector(e.get<std::string>());
      } else {
        check_keys(e, {"kind", "label", "alpha", "lambda", "inner_folds", "bootstrap_draws", "seed"},
                   "selector entry");
        if (!e.contains("kind")) throw ConfigError("selector entry needs a 'kind'");
        spec.kind = parse_selector(get<std::string>(e, "kind", "selector entry"));
        read(e, "label", spec.label, "selector entry");
        selector_overrides(e, spec.config, "selector entry");
      }
      c.selectors.push_back(std::move(spec));
    }
  } else {
    for (auto& s : c.selectors) s.config = shared;
  }
  return c;
}

json to_json(const ExperimentConfig& c) {
  json noise = json::array();
  for (const auto& s : c.noise) noise.push_back({{"mean", s.mean}, {"sd", s.sd}});
  json selectors = json::array();
  for (const auto& s : c.selectors) {
    json e = selector_config_json(s.config);
    e["kind"] = std::string(selector_name(s.kind));
    e["label"] = s.name();
    selectors.push_back(std::move(e));
  }
  json nuisance{{"clip_eta", c.nuisance.clip_eta},
                {"max_iter", c.nuisance.max_iter},
                {"tol", c.nuisance.tol}};
  nuisance["ridge_lambda"] = c.nuisance.ridge_lambda ? json(*c.nuisance.ridge_lambda) : json(nullptr);
  nuisance["logistic_l2"] = c.nuisance.logistic_l2 ? json(*c.nuisance.logistic_l2) : json(nullptr);
  // Worker count is left out: results do not depend on it.
  return {{"n", c.n},
          {"dims", {c.dims.instrument, c.dims.confounder, c.dims.adjustment, c.dims.distractor}},
          {"noise", noise},
          {"selectors", selectors},
          {"nuisance", nuisance},
          {"oracle_nuisance", c.oracle_nuisance},
          {"repetitions", c.repetitions},
          {"seed", c.seed},
          {"sample_fraction", c.sample_fraction},
          {"ci_resamples", c.ci_resamples}};
}

CltConfig clt_config_from_json(const json& j) {
  json base = j;
  json block = json::object();
  if (base.contains("clt")) {
    block = base.at("clt");
    base.erase("clt");
  }
  base.erase("stability");
  base.erase("sweep");
  CltConfig c;
  c.experiment = experiment_config_from_json(base);
  check_keys(block, {"datasets", "bootstrap", "level", "standardized_replicates", "pair"}, "clt");
  read(block, "datasets", c.datasets, "clt");
  read(block, "bootstrap", c.bootstrap, "clt");
  read(block, "level", c.level, "clt");
  read(block, "standardized_replicates", c.standardized_replicates, "clt");
  if (block.contains("pair")) {
    const auto pair = get<std::vector<std::size_t>>(block, "pair", "clt");
    if (pair.size() != 2) throw ConfigError("clt.pair must hold two candidate indices");
    c.pair_r = pair[0];
    c.pair_s = pair[1];
  }
  return c;
}

StabilityConfig stability_config_from_json(const json& j, std::vector<std::size_t>& n_grid) {
  StabilityConfig c;
  const ExperimentConfig base = [&] {
    json b = j;
    b.erase("clt");
    b.erase("stability");
    b.erase("sweep");
    return experiment_config_from_json(b);
  }();
  c.dims = base.dims;
  c.noise = base.noise;
  c.nuisance = base.nuisance;
  c.oracle_nuisance = base.oracle_nuisance;
  c.seed = base.seed;
  c.selector = base.selectors.front().config;
  n_grid = {500, 1000, 2000, 4000};
  if (j.contains("stability")) {
    const json& block = j.at("stability");
    check_keys(block, {"n_grid", "probes", "eval_size", "oracle_nuisance", "lambda"}, "stability");
    read(block, "n_grid", n_grid, "stability");
    read(block, "probes", c.probes, "stability");
    read(block, "eval_size", c.eval_size, "stability");
    read(block, "oracle_nuisance", c.oracle_nuisance, "stability");
    read(block, "lambda", c.selector.lambda, "stability");
  }
  return c;
}

json to_json(const SelectionResult& r) {
  json stats = json::array();
  for (const auto& d : r.stats) {
    stats.push_back({{"candidate", d.candidate},
                     {"statistic", num(d.statistic)},
                     {"critical", num(d.critical)},
                     {"decision", d.accepted ? "accept" : "reject"}});
  }
  return {{"selector", r.selector},
          {"alpha", r.alpha},
          {"lambda", r.lambda ? num(*r.lambda) : json(nullptr)},
          {"inner_folds", r.inner_folds},
          {"bootstrap_draws", r.bootstrap_draws},
          {"seed", r.seed},
          {"accepted", r.accepted},
          {"stats", stats}};
}

json to_json(const ExperimentReport& report) {
  json selectors = json::array();
  for (const auto& s : report.summaries) {
    selectors.push_back({{"name", s.name},
                         {"reps_ok", s.reps_ok},
                         {"failures", s.failures},
                         {"fwer", num(s.fwer)},
                         {"fwer_ci", interval(s.fwer_ci)},
                         {"anws", num(s.anws)},
                         {"anws_se", num(s.anws_se)},
                         {"anws_ci", interval(s.anws_ci)}});
  }
  json failures = json::array();
  for (const auto& o : report.reps) {
    if (!o.result) failures.push_back({{"rep", o.rep}, {"selector", o.selector}, {"error", o.error}});
  }
  return {{"config", to_json(report.config)},
          {"p", report.p},
          {"winner", report.winner},
          {"selectors", selectors},
          {"failures", failures},
          {"diagnostics", report.diagnostics}};
}

json to_json(const CltReport& r) {
  json datasets = json::array();
  for (const auto& d : r.datasets) {
    json pairs = json::array();
    for (const auto& p : d.pairs) {
      json e{{"r", p.r}, {"s", p.s}, {"skipped", p.skipped}};
      if (p.skipped) {
        e["note"] = p.note;
      } else {
        e["ks_statistic"] = num(p.statistic);
        e["p_value"] = num(p.p_value);
        e["adjusted_p"] = num(p.adjusted);
      }
      pairs.push_back(std::move(e));
    }
    datasets.push_back({{"rep", d.rep},
                        {"min_adjusted_p", num(d.min_adjusted)},
                        {"rejected", d.rejected},
                        {"pairs", pairs}});
  }
  json standardized = json::array();
  for (double v : r.standardized) standardized.push_back(num(v));
  return {{"rejection_share", r.rejection_share},
          {"skipped_pairs", r.skipped_pairs},
          {"standardized_ks", {{"statistic", num(r.standardized_ks.statistic)},
                               {"p_value", num(r.standardized_ks.p_value)}}},
          {"standardized", standardized},
          {"example_bootstrap", r.example_bootstrap},
          {"notes", r.notes},
          {"datasets", datasets}};
}

json to_json(const StabilityReport& r) {
  json points = json::array();
  for (const auto& p : r.points) {
    points.push_back({{"n", p.n},
                      {"lambda", p.lambda},
                      {"delta1_sq", p.delta1_sq},
                      {"delta2_sq", p.delta2_sq},
                      {"first", p.first},
                      {"second", p.second}});
  }
  return {{"delta1", r.delta1},
          {"delta2", r.delta2},
          {"slope1", r.slope1 ? json(*r.slope1) : json(nullptr)},
          {"slope2", r.slope2 ? json(*r.slope2) : json(nullptr)},
          {"notes", r.notes},
          {"points", points}};
}

json sweep_to_json(SweepAxis axis, const std::vector<double>& values,
                   const std::vector<ExperimentReport>& reports) {
  json points = json::array();
  for (std::size_t k = 0; k < reports.size(); ++k) {
    json j = to_json(reports[k]);
    j["value"] = values[k];
    points.push_back(std::move(j));
  }
  return {{"axis", std::string(sweep_axis_name(axis))}, {"points", points}};
}

void write_per_rep_csv(std::ostream& out, const ExperimentReport& report) {
  out << "rep,selector,candidate,statistic,critical,accepted\n";
  for (const auto& o : report.reps) {
    if (!o.result) continue;
    for (const auto& d : o.result->stats) {
      out << fmt::format("{},{},{},{},{},{}\n", o.rep, o.selector, d.candidate, d.statistic,
                         d.critical, d.accepted ? 1 : 0);
    }
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path.string());
  out << text;
  if (!out) throw Error("failed writing file: " + path.string());
}

void write_experiment(const ExperimentReport& report, const std::filesystem::path& dir,
                      const json& metadata) {
  write_text_file(dir / "report.json", to_json(report).dump(2) + "\n");
  std::ostringstream csv;
  write_per_rep_csv(csv, report);
  write_text_file(dir / "per_rep.csv", csv.str());
  write_text_file(dir / "metadata.json", metadata.dump(2) + "\n");
}

}  // namespace htesel
