#include "htesel/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "htesel/error.hpp"
#include "htesel/rng.hpp"

namespace htesel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams hanging off a repetition seed.
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kCandidateStream = 2;
constexpr std::uint64_t kSubsampleStream = 3;
constexpr std::uint64_t kSelectorStream = 4;
constexpr std::uint64_t kCltStream = 5;

// Streams hanging off the experiment seed, kept clear of repetition indices.
constexpr std::uint64_t kSummaryStream = 1ULL << 40;
constexpr int kStandardizedOffset = 1 << 24;

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(k) for k in [0, count). Each index writes only its own slot, so the
// result does not depend on the worker count.
template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  workers = std::max(1, std::min(resolve_workers(workers), count));
  if (workers == 1) {
    for (int k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int k = next++; k < count && !failed; k = next++) {
        try {
          fn(k);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

ToyGroundTruth subset_truth(const ToyGroundTruth& truth, const std::vector<std::size_t>& idx) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  ToyGroundTruth out{Eigen::VectorXd(m), Eigen::VectorXd(m), Eigen::VectorXd(m),
                     Eigen::VectorXd(m)};
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(k)]);
    out.tau[k] = truth.tau[i];
    out.mu0[k] = truth.mu0[i];
    out.mu1[k] = truth.mu1[i];
    out.e[k] = truth.e[i];
  }
  return out;
}

NuisanceValues oracle_values(const ToyGroundTruth& truth) {
  return {truth.mu0, truth.mu1, truth.e};
}

SelectorSummary summarize(const std::string& name, const std::vector<RepOutcome>& outcomes,
                          int resamples, std::uint64_t seed) {
  SelectorSummary s;
  s.name = name;
  std::vector<double> fw;
  std::vector<double> wrong;
  for (const auto& o : outcomes) {
    if (o.selector != name) continue;
    if (!o.result) {
      ++s.failures;
      continue;
    }
    fw.push_back(o.winner_rejected ? 1.0 : 0.0);
    wrong.push_back(static_cast<double>(o.wrong_selections));
  }
  s.reps_ok = static_cast<int>(fw.size());
  if (fw.empty()) {
    s.fwer = s.anws = s.anws_se = kNaN;
    s.fwer_ci = s.anws_ci = {kNaN, kNaN};
    return s;
  }
  s.fwer = stats::mean(fw);
  s.anws = stats::mean(wrong);
  s.anws_se = wrong.size() > 1 ? stats::sample_sd(wrong) / std::sqrt(static_cast<double>(wrong.size()))
                               : 0.0;
  s.fwer_ci = stats::bootstrap_mean_ci(fw, resamples, 0.95, derive_seed(seed, 0));
  s.anws_ci = stats::bootstrap_mean_ci(wrong, resamples, 0.95, derive_seed(seed, 1));
  return s;
}

template <class Metric>
PairedDifference paired_difference(const ExperimentReport& report, const std::string& a,
                                   const std::string& b, Metric metric, std::uint64_t stream) {
  std::map<int, double> lhs;
  std::map<int, double> rhs;
  for (const auto& o : report.reps) {
    if (!o.result) continue;
    if (o.selector == a) lhs[o.rep] = metric(o);
    if (o.selector == b) rhs[o.rep] = metric(o);
  }
  std::vector<double> diff;
  for (const auto& [rep, v] : lhs) {
    const auto it = rhs.find(rep);
    if (it != rhs.end()) diff.push_back(v - it->second);
  }
  if (diff.empty()) throw Error(fmt::format("no repetitions where both {} and {} succeeded", a, b));
  PairedDifference out;
  out.reps = static_cast<int>(diff.size());
  out.mean = stats::mean(diff);
  out.ci = stats::bootstrap_mean_ci(diff, report.config.ci_resamples, 0.95,
                                    derive_seed(report.config.seed, stream));
  return out;
}

}  // namespace

std::string SelectorSpec::name() const {
  return label.empty() ? std::string(selector_name(kind)) : label;
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (n < 20) throw ConfigError("n must be >= 20");
  if (dims.instrument < 1 || dims.confounder < 1 || dims.adjustment < 1 || dims.distractor < 1) {
    throw ConfigError("all covariate block sizes must be >= 1");
  }
  if (noise.size() < 2) throw ConfigError("need at least two candidate noise specs");
  for (const auto& s : noise) {
    if (!(s.sd >= 0.0) || !std::isfinite(s.mean) || !std::isfinite(s.sd)) {
      throw ConfigError("noise specs need a finite mean and sd >= 0");
    }
  }
  winner_index(noise);
  if (selectors.empty()) throw ConfigError("no selectors configured");
  std::vector<std::string> names;
  for (const auto& s : selectors) {
    s.config.validate();
    names.push_back(s.name());
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
    throw ConfigError("selector labels must be unique");
  }
  nuisance.validate();
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
    throw ConfigError("sample_fraction must lie in (0, 1]");
  }
  if (units_used() < 20) throw ConfigError("sample_fraction leaves fewer than 20 units");
  if (ci_resamples < 2000) throw ConfigError("ci_resamples must be >= 2000");
  if (workers < 0) throw ConfigError("workers must be >= 0");
}

std::size_t ExperimentConfig::units_used() const {
  return static_cast<std::size_t>(std::llround(sample_fraction * static_cast<double>(n)));
}

Trial::Trial(int rep, std::uint64_t rep_seed, ToySample sample, CandidateSet candidates,
             std::size_t winner, NuisanceSource source)
    : rep_(rep),
      rep_seed_(rep_seed),
      sample_(std::move(sample)),
      candidates_(std::move(candidates)),
      winner_(winner),
      source_(std::move(source)) {}

SelectorConfig Trial::seeded(const SelectorConfig& config) const {
  SelectorConfig out = config;
  out.seed = derive_seed(derive_seed(rep_seed_, kSelectorStream), config.seed);
  return out;
}

const CrossFit& Trial::two_way(const SelectorConfig& seeded_config) {
  const auto key = std::make_pair(seeded_config.seed, seeded_config.inner_folds);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    it = cache_.emplace(key, selector_cross_fit(data(), candidates_, seeded_config, source_)).first;
  }
  return it->second;
}

Trial make_trial(const ExperimentConfig& config, int rep) {
  const std::uint64_t rep_seed = derive_seed(config.seed, static_cast<std::uint64_t>(rep));
  ToySample sample = generate_toy(config.n, config.dims, derive_seed(rep_seed, kDataStream));
  CandidateSet candidates =
      make_candidates(sample.truth, config.noise, derive_seed(rep_seed, kCandidateStream));
  if (config.units_used() < config.n) {
    std::vector<std::size_t> idx(config.n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_rng(rep_seed, kSubsampleStream);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(config.units_used());
    std::sort(idx.begin(), idx.end());
    sample = ToySample{sample.data.subset(idx), subset_truth(sample.truth, idx)};
    candidates = candidates.select_units(idx);
  }
  NuisanceSource source = config.oracle_nuisance ? NuisanceSource{oracle_values(sample.truth)}
                                                 : NuisanceSource{config.nuisance};
  const std::size_t winner = winner_index(config.noise);
  return Trial(rep, rep_seed, std::move(sample), std::move(candidates), winner, std::move(source));
}

SelectionResult run_in_trial(SelectorKind kind, Trial& trial, const SelectorConfig& config) {
  const SelectorConfig c = trial.seeded(config);
  switch (kind) {
    case SelectorKind::Naive: return naive_from_tensor(trial.two_way(c).tensor, c);
    case SelectorKind::Bonferroni: return bonferroni_from_tensor(trial.two_way(c).tensor, c);
    case SelectorKind::Proposed: {
      const CrossFit& cf = trial.two_way(c);
      return proposed_from_tensor(cf.tensor, cf.split, c, "proposed");
    }
    case SelectorKind::Ablation:
      return single_layer_ablation_select(trial.data(), trial.candidates(), c, trial.source());
  }
  throw ConfigError("unknown selector kind");
}

std::vector<NamedSelector> standard_selectors(const ExperimentConfig& config) {
  std::vector<NamedSelector> out;
  for (const auto& spec : config.selectors) {
    out.push_back({spec.name(), [kind = spec.kind, cfg = spec.config](Trial& trial) {
                     return run_in_trial(kind, trial, cfg);
                   }});
  }
  return out;
}

std::pair<bool, int> score_decision(const SelectionResult& result, std::size_t winner) {
  const bool kept = result.accepts(winner);
  const int wrong = static_cast<int>(result.accepted.size()) - (kept ? 1 : 0);
  return {!kept, wrong};
}

const SelectorSummary& ExperimentReport::summary(const std::string& name) const {
  for (const auto& s : summaries) {
    if (s.name == name) return s;
  }
  throw Error(fmt::format("no selector named '{}' in report", name));
}

std::vector<double> ExperimentReport::anws_series(const std::string& name) const {
  std::vector<double> out;
  for (const auto& o : reps) {
    if (o.selector == name && o.result) out.push_back(o.wrong_selections);
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  return run_experiment(config, standard_selectors(config));
}

ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::vector<NamedSelector>& selectors) {
  if (config.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (selectors.empty()) throw ConfigError("no selectors configured");
  const std::size_t winner = winner_index(config.noise);
  const std::size_t s_count = selectors.size();

  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(config.repetitions) * s_count);
  parallel_for(config.repetitions, config.workers, [&](int rep) {
    RepOutcome* slot = outcomes.data() + static_cast<std::size_t>(rep) * s_count;
    for (std::size_t s = 0; s < s_count; ++s) {
      slot[s].rep = rep;
      slot[s].selector = selectors[s].name;
    }
    std::optional<Trial> trial;
    try {
      trial.emplace(make_trial(config, rep));
    } catch (const std::exception& e) {
      for (std::size_t s = 0; s < s_count; ++s) {
        slot[s].error = fmt::format("data generation failed: {}", e.what());
      }
      return;
    }
    for (std::size_t s = 0; s < s_count; ++s) {
      try {
        SelectionResult r = selectors[s].run(*trial);
        const auto [rejected, wrong] = score_decision(r, winner);
        slot[s].winner_rejected = rejected;
        slot[s].wrong_selections = wrong;
        slot[s].result = std::move(r);
      } catch (const std::exception& e) {
        slot[s].error = e.what();
        if (slot[s].error.empty()) slot[s].error = "unknown failure";
      }
    }
  });

  ExperimentReport report;
  report.config = config;
  report.p = config.noise.size();
  report.winner = winner;
  for (std::size_t s = 0; s < s_count; ++s) {
    report.summaries.push_back(summarize(selectors[s].name, outcomes, config.ci_resamples,
                                         derive_seed(config.seed, kSummaryStream + s)));
  }
  report.reps = std::move(outcomes);
  return report;
}

PairedDifference anws_difference(const ExperimentReport& report, const std::string& a,
                                 const std::string& b) {
  return paired_difference(
      report, a, b, [](const RepOutcome& o) { return static_cast<double>(o.wrong_selections); },
      kSummaryStream - 1);
}

PairedDifference fwer_difference(const ExperimentReport& report, const std::string& a,
                                 const std::string& b) {
  return paired_difference(
      report, a, b, [](const RepOutcome& o) { return o.winner_rejected ? 1.0 : 0.0; },
      kSummaryStream - 2);
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "candidate_count") return SweepAxis::CandidateCount;
  if (name == "sample_fraction") return SweepAxis::SampleFraction;
  throw ConfigError(fmt::format("unknown sweep axis '{}'", name));
}

std::string_view sweep_axis_name(SweepAxis axis) {
  return axis == SweepAxis::CandidateCount ? "candidate_count" : "sample_fraction";
}

std::vector<ExperimentReport> sweep(const ExperimentConfig& config, SweepAxis axis,
                                    const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (!std::is_sorted(values.begin(), values.end()) ||
      std::adjacent_find(values.begin(), values.end()) != values.end()) {
    throw ConfigError("sweep values must be strictly increasing");
  }
  config.validate();
  const std::size_t winner = winner_index(config.noise);
  std::vector<ExperimentConfig> points;
  for (double v : values) {
    ExperimentConfig c = config;
    if (axis == SweepAxis::CandidateCount) {
      if (v != std::floor(v) || v < 2.0 || v > static_cast<double>(config.noise.size())) {
        throw ConfigError(fmt::format("candidate count {} must be an integer in [2, {}]", v,
                                      config.noise.size()));
      }
      c.noise.resize(static_cast<std::size_t>(v));
      if (winner >= c.noise.size() || winner_index(c.noise) != winner) {
        throw ConfigError(fmt::format("candidate count {} drops the winner", v));
      }
    } else {
      c.sample_fraction = v;
    }
    c.validate();
    points.push_back(std::move(c));
  }
  std::vector<ExperimentReport> out;
  for (const auto& c : points) out.push_back(run_experiment(c));
  return out;
}

// ---- CLT diagnostic ---------------------------------------------------------

Eigen::MatrixXd upper_pair_scores(const ScoreTensor& tensor,
                                  std::vector<std::pair<std::size_t, std::size_t>>& labels) {
  labels.clear();
  const std::size_t p = tensor.p();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tensor.n()),
                      static_cast<Eigen::Index>(p * (p - 1) / 2));
  Eigen::Index c = 0;
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t s = r + 1; s < p; ++s, ++c) {
      const auto col = tensor.pair(r, s);
      out.col(c) = Eigen::Map<const Eigen::VectorXd>(col.data(), out.rows());
      labels.emplace_back(r, s);
    }
  }
  return out;
}

CltDatasetResult clt_check(const Eigen::MatrixXd& pair_scores,
                           const std::vector<std::pair<std::size_t, std::size_t>>& labels,
                           int bootstrap, double level, std::uint64_t seed,
                           std::vector<double>* first_bootstrap) {
  if (static_cast<std::size_t>(pair_scores.cols()) != labels.size()) {
    throw DataError("one label per score column required");
  }
  if (pair_scores.rows() < 2) throw DataError("bootstrap check needs at least two units");
  if (bootstrap < 2) throw ConfigError("bootstrap check needs at least two resamples");
  const Eigen::Index n = pair_scores.rows();
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  CltDatasetResult out;
  std::vector<Eigen::Index> tested;
  for (Eigen::Index c = 0; c < pair_scores.cols(); ++c) {
    PairKs pk;
    pk.r = labels[static_cast<std::size_t>(c)].first;
    pk.s = labels[static_cast<std::size_t>(c)].second;
    const auto col = pair_scores.col(c);
    const double m = col.mean();
    const double spread = (col.array() - m).abs().maxCoeff();
    if (!std::isfinite(spread) || spread <= 1e-12 * (1.0 + std::abs(m))) {
      pk.skipped = true;
      pk.note = "degenerate score variance; pair skipped";
    } else {
      tested.push_back(c);
    }
    out.pairs.push_back(std::move(pk));
  }
  if (tested.empty()) return out;

  // One resample of units per draw, shared by every tested pair.
  const auto t = static_cast<Eigen::Index>(tested.size());
  Eigen::MatrixXd stat(bootstrap, t);
  Eigen::VectorXd center(t);
  for (Eigen::Index k = 0; k < t; ++k) center[k] = pair_scores.col(tested[static_cast<std::size_t>(k)]).mean();
  Rng rng = make_rng(seed, 0);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  Eigen::VectorXd sum(t);
  Eigen::VectorXd sq(t);
  for (int b = 0; b < bootstrap; ++b) {
    for (auto& i : idx) i = pick(rng);
    for (Eigen::Index k = 0; k < t; ++k) {
      const auto col = pair_scores.col(tested[static_cast<std::size_t>(k)]);
      double s1 = 0.0;
      double s2 = 0.0;
      for (Eigen::Index i : idx) {
        const double v = col[i] - center[k];
        s1 += v;
        s2 += v * v;
      }
      const double mean = s1 / static_cast<double>(n);
      const double var = (s2 - s1 * mean) / static_cast<double>(n - 1);
      stat(b, k) = var > 0.0 ? mean / (std::sqrt(var) / sqrt_n) : 0.0;
    }
  }

  double min_adj = 1.0;
  for (Eigen::Index k = 0; k < t; ++k) {
    const Eigen::VectorXd draws = stat.col(k);
    const auto ks = stats::ks_test_normal({draws.data(), static_cast<std::size_t>(draws.size())});
    PairKs& pk = out.pairs[static_cast<std::size_t>(tested[static_cast<std::size_t>(k)])];
    pk.statistic = ks.statistic;
    pk.p_value = ks.p_value;
    pk.adjusted = std::min(1.0, ks.p_value * static_cast<double>(t));
    min_adj = std::min(min_adj, pk.adjusted);
    if (k == 0 && first_bootstrap) first_bootstrap->assign(draws.data(), draws.data() + draws.size());
  }
  out.min_adjusted = min_adj;
  out.rejected = min_adj < level;
  return out;
}

CltReport clt_diagnostic(const CltConfig& config) {
  config.experiment.validate();
  if (config.datasets < 1) throw ConfigError("datasets must be >= 1");
  if (config.standardized_replicates < 0) throw ConfigError("standardized_replicates must be >= 0");
  if (!(config.level > 0.0 && config.level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  const auto& noise = config.experiment.noise;
  if (config.pair_r >= noise.size() || config.pair_s >= noise.size() ||
      config.pair_r == config.pair_s) {
    throw ConfigError("standardized pair must name two distinct candidates");
  }
  // Scores come from the first selector's split settings.
  const SelectorConfig split_config = config.experiment.selectors.front().config;

  CltReport report;
  report.datasets.resize(static_cast<std::size_t>(config.datasets));
  std::vector<std::vector<double>> first(static_cast<std::size_t>(config.datasets));
  parallel_for(config.datasets, config.experiment.workers, [&](int d) {
    Trial trial = make_trial(config.experiment, d);
    const CrossFit& cf = trial.two_way(trial.seeded(split_config));
    std::vector<std::pair<std::size_t, std::size_t>> labels;
    const Eigen::MatrixXd scores = upper_pair_scores(cf.tensor, labels);
    auto& slot = report.datasets[static_cast<std::size_t>(d)];
    slot = clt_check(scores, labels, config.bootstrap, config.level,
                     derive_seed(trial.rep_seed(), kCltStream),
                     d == 0 ? &first[0] : nullptr);
    slot.rep = d;
  });
  report.example_bootstrap = std::move(first[0]);
  int rejected = 0;
  for (const auto& d : report.datasets) {
    rejected += d.rejected ? 1 : 0;
    for (const auto& p : d.pairs) {
      if (p.skipped) {
        ++report.skipped_pairs;
        report.notes.push_back(
            fmt::format("dataset {}: pair ({}, {}) skipped: {}", d.rep, p.r, p.s, p.note));
      }
    }
  }
  report.rejection_share = static_cast<double>(rejected) / static_cast<double>(config.datasets);

  const double delta = population_delta(noise[config.pair_r], noise[config.pair_s]);
  report.standardized.assign(static_cast<std::size_t>(config.standardized_replicates), kNaN);
  parallel_for(config.standardized_replicates, config.experiment.workers, [&](int k) {
    Trial trial = make_trial(config.experiment, kStandardizedOffset + k);
    const CrossFit& cf = trial.two_way(trial.seeded(split_config));
    const auto col = cf.tensor.pair(config.pair_r, config.pair_s);
    const double sd = stats::sample_sd(col);
    const double n = static_cast<double>(col.size());
    report.standardized[static_cast<std::size_t>(k)] =
        (stats::mean(col) - delta) / (sd / std::sqrt(n));
  });
  if (!report.standardized.empty()) {
    report.standardized_ks = stats::ks_test_normal(report.standardized);
  }
  return report;
}

// ---- stability diagnostic ---------------------------------------------------

namespace {

struct StabilityWorld {
  ToyModel model;
  const StabilityConfig* config;
  ToySample eval;
  CandidateSet eval_candidates;
};

// Mean of candidate moments over the evaluation sample, so that the expected
// pair score is a[r] - a[s] - 2 (b[r] - b[s]) for a given pseudo-outcome.
struct EvalMoments {
  Eigen::VectorXd sq;     // mean tau_r^2
  Eigen::VectorXd cross;  // mean tau_r * gamma
};

EvalMoments eval_moments(const CandidateSet& c, const Eigen::VectorXd& gamma) {
  EvalMoments m;
  const Eigen::MatrixXd& pred = c.predictions();
  const double n = static_cast<double>(c.n());
  m.sq = pred.array().square().rowwise().sum() / n;
  m.cross = (pred * gamma) / n;
  return m;
}

Eigen::MatrixXd centered_scores(const StabilityWorld& world, const ToySample& sample,
                                const CandidateSet& candidates, const SplitPlan& split,
                                double lambda) {
  const StabilityConfig& cfg = *world.config;
  NuisanceValues values;
  std::array<EvalMoments, 2> moments;
  if (cfg.oracle_nuisance) {
    values = oracle_values(sample.truth);
    const EvalMoments m = eval_moments(
        world.eval_candidates, pseudo_outcomes(world.eval.data, oracle_values(world.eval.truth)));
    moments = {m, m};
  } else {
    const std::array<NuisanceModel, 2> models{
        fit_nuisance(sample.data, split.members(1), cfg.nuisance),
        fit_nuisance(sample.data, split.members(0), cfg.nuisance)};
    const auto n = static_cast<Eigen::Index>(sample.data.n());
    values = {Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (int f = 0; f < 2; ++f) {
      const auto& model = models[static_cast<std::size_t>(f)];
      predict_into(model, sample.data, split.members(f), values);
      moments[static_cast<std::size_t>(f)] = eval_moments(
          world.eval_candidates, pseudo_outcomes(world.eval.data, predict_all(model, world.eval.data)));
    }
  }
  const ScoreTensor tensor = build_score_tensor(sample.data, candidates, values, split.major);
  const ProposedStatistics st = proposed_statistics(tensor, split, lambda);

  Eigen::MatrixXd k = st.q;
  for (const WeightBlock& block : st.weights) {
    const EvalMoments& m = moments[static_cast<std::size_t>(block.major_fold)];
    const auto r = static_cast<Eigen::Index>(block.candidate);
    const auto comp = tensor.competitors(block.candidate);
    double expected = 0.0;
    for (std::size_t c = 0; c < comp.size(); ++c) {
      const auto s = static_cast<Eigen::Index>(comp[c]);
      expected += block.weights[static_cast<Eigen::Index>(c)] *
                  (m.sq[r] - m.sq[s] - 2.0 * (m.cross[r] - m.cross[s]));
    }
    for (std::size_t i : split.members(block.major_fold, block.inner_fold)) {
      k(static_cast<Eigen::Index>(i), r) -= expected;
    }
  }
  return k;
}

struct Replacement {
  ToyUnit unit;
  Eigen::VectorXd column;
};

Replacement fresh_unit(const StabilityWorld& world, Rng& rng) {
  Replacement r{world.model.draw_unit(rng), {}};
  r.column = draw_candidate_column(r.unit.mu1 - r.unit.mu0, world.config->noise, rng);
  return r;
}

void apply(ToySample& sample, CandidateSet& candidates, std::size_t j, const Replacement& rep) {
  sample.data = sample.data.with_replaced(j, rep.unit.obs);
  const auto i = static_cast<Eigen::Index>(j);
  sample.truth.mu0[i] = rep.unit.mu0;
  sample.truth.mu1[i] = rep.unit.mu1;
  sample.truth.tau[i] = rep.unit.mu1 - rep.unit.mu0;
  sample.truth.e[i] = rep.unit.e;
  candidates = candidates.with_unit(j, rep.column);
}

// Uniform unit outside i's own cell. `opposite` picks the other major fold.
std::size_t pick_unit(const SplitPlan& split, std::size_t i, bool opposite,
                      std::size_t exclude, Rng& rng) {
  std::vector<std::size_t> pool;
  const int mi = split.major[i];
  for (std::size_t u = 0; u < split.n(); ++u) {
    if (u == i || u == exclude) continue;
    const bool same_major = split.major[u] == mi;
    if (opposite ? same_major : (!same_major || split.inner[u] == split.inner[i])) continue;
    pool.push_back(u);
  }
  if (pool.empty()) throw SelectionError("no unit available for the stability probe");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

// Max over candidates r of (a_r)^2.
double max_sq(const Eigen::RowVectorXd& a) { return a.array().square().maxCoeff(); }

// Max over probe groups and candidates of the group mean of squared entries.
double grouped_max(const std::vector<Eigen::RowVectorXd>& diffs, const std::vector<int>& group) {
  std::map<int, std::pair<Eigen::RowVectorXd, int>> acc;
  for (std::size_t k = 0; k < diffs.size(); ++k) {
    auto [it, fresh] = acc.try_emplace(group[k], Eigen::RowVectorXd::Zero(diffs[k].size()), 0);
    it->second.first += diffs[k].array().square().matrix();
    it->second.second += 1;
  }
  double best = 0.0;
  for (const auto& [g, v] : acc) best = std::max(best, (v.first / v.second).maxCoeff());
  return best;
}

}  // namespace

StabilityReport stability_diagnostic(const std::vector<std::size_t>& n_grid,
                                     const StabilityConfig& config) {
  if (n_grid.size() < 3) throw ConfigError("stability grid needs at least three sizes");
  if (!std::is_sorted(n_grid.begin(), n_grid.end()) ||
      std::adjacent_find(n_grid.begin(), n_grid.end()) != n_grid.end()) {
    throw ConfigError("stability grid must be strictly increasing");
  }
  if (config.probes < 1) throw ConfigError("probes must be >= 1");
  if (config.eval_size < 100) throw ConfigError("eval_size must be >= 100");
  if (config.noise.size() < 2) throw ConfigError("need at least two candidate noise specs");
  config.selector.validate();
  config.nuisance.validate();

  Rng weight_rng = make_rng(config.seed, 0);
  const ToyModel model = ToyModel::draw(config.dims, weight_rng);
  Rng eval_rng = make_rng(config.seed, 1);
  ToySample eval = model.sample(config.eval_size, eval_rng);
  CandidateSet eval_candidates = make_candidates(eval.truth, config.noise, derive_seed(config.seed, 2));
  const StabilityWorld world{model, &config, std::move(eval), std::move(eval_candidates)};

  StabilityReport report;
  for (std::size_t n : n_grid) {
    const std::uint64_t point_seed = derive_seed(config.seed, 1000 + n);
    Rng sample_rng = make_rng(point_seed, 0);
    const ToySample base = world.model.sample(n, sample_rng);
    const CandidateSet base_c = make_candidates(base.truth, config.noise, derive_seed(point_seed, 1));
    const SplitPlan split = two_way_split(n, config.selector.inner_folds, derive_seed(point_seed, 2));
    const double lambda = config.selector.lambda_for(n);
    const Eigen::MatrixXd k0 = centered_scores(world, base, base_c, split, lambda);

    StabilityPoint point;
    point.n = n;
    point.lambda = lambda;
    std::vector<Eigen::RowVectorXd> d1;
    std::vector<Eigen::RowVectorXd> d2;
    std::vector<int> g1;
    std::vector<int> g2;
    Rng probe_rng = make_rng(point_seed, 3);
    std::uniform_int_distribution<std::size_t> pick_i(0, n - 1);
    for (int probe = 0; probe < config.probes; ++probe) {
      const std::size_t i = pick_i(probe_rng);
      const bool j_opposite = probe % 2 == 1;
      const bool l_opposite = (probe / 2) % 2 == 1;
      const std::size_t j = pick_unit(split, i, j_opposite, i, probe_rng);
      const std::size_t l = pick_unit(split, i, l_opposite, j, probe_rng);
      const Replacement rj = fresh_unit(world, probe_rng);
      const Replacement rl = fresh_unit(world, probe_rng);

      ToySample s_j = base;
      CandidateSet c_j = base_c;
      apply(s_j, c_j, j, rj);
      ToySample s_l = base;
      CandidateSet c_l = base_c;
      apply(s_l, c_l, l, rl);
      ToySample s_jl = s_j;
      CandidateSet c_jl = c_j;
      apply(s_jl, c_jl, l, rl);

      const auto row = static_cast<Eigen::Index>(i);
      const Eigen::RowVectorXd ki = k0.row(row);
      const Eigen::RowVectorXd kj = centered_scores(world, s_j, c_j, split, lambda).row(row);
      const Eigen::RowVectorXd kl = centered_scores(world, s_l, c_l, split, lambda).row(row);
      const Eigen::RowVectorXd kjl = centered_scores(world, s_jl, c_jl, split, lambda).row(row);

      d1.push_back(ki - kj);
      g1.push_back(j_opposite ? 1 : 0);
      d2.push_back(ki - kj - kl + kjl);
      g2.push_back((j_opposite ? 1 : 0) + (l_opposite ? 2 : 0));
      point.first.push_back(max_sq(d1.back()));
      point.second.push_back(max_sq(d2.back()));
    }
    point.delta1_sq = grouped_max(d1, g1);
    point.delta2_sq = grouped_max(d2, g2);
    report.delta1 = std::max(report.delta1, std::sqrt(point.delta1_sq));
    report.delta2 = std::max(report.delta2, std::sqrt(point.delta2_sq));
    report.points.push_back(std::move(point));
  }

  auto slope = [&](auto member, const char* label) -> std::optional<double> {
    std::vector<double> lx;
    std::vector<double> ly;
    for (const auto& p : report.points) {
      const double v = p.*member;
      if (!(v > 0.0)) {
        report.notes.push_back(fmt::format("{} is zero at n = {}; no slope fitted", label, p.n));
        return std::nullopt;
      }
      lx.push_back(std::log(static_cast<double>(p.n)));
      ly.push_back(std::log(v));
    }
    return stats::ols_slope(lx, ly);
  };
  report.slope1 = slope(&StabilityPoint::delta1_sq, "delta1_sq");
  report.slope2 = slope(&StabilityPoint::delta2_sq, "delta2_sq");
  return report;
}

}  // namespace htesel
