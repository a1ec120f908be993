#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "htesel/datagen.hpp"
#include "htesel/scores.hpp"
#include "htesel/selectors.hpp"
#include "htesel/stats.hpp"

namespace htesel {

struct SelectorSpec {
  SelectorKind kind = SelectorKind::Proposed;
  SelectorConfig config;
  std::string label;  // report key; defaults to the selector name

  std::string name() const;
};

struct ExperimentConfig {
  std::size_t n = 2000;
  ToyDims dims;
  std::vector<NoiseSpec> noise = similar_specs();
  std::vector<SelectorSpec> selectors = {{SelectorKind::Naive, {}, {}},
                                         {SelectorKind::Bonferroni, {}, {}},
                                         {SelectorKind::Proposed, {}, {}}};
  NuisanceConfig nuisance;
  bool oracle_nuisance = false;
  int repetitions = 100;
  std::uint64_t seed = 0;
  double sample_fraction = 1.0;
  int ci_resamples = 2000;
  int workers = 0;  // 0: hardware concurrency
  std::string output;  // default output directory for the CLI

  /// Throws ConfigError.
  void validate() const;
  std::size_t units_used() const;
};

/// Everything one repetition's selectors see. Cross-fits are cached per
/// (split seed, inner folds) so selectors with the same config share scores.
class Trial {
public:
  Trial(int rep, std::uint64_t rep_seed, ToySample sample, CandidateSet candidates,
        std::size_t winner, NuisanceSource source);

  int rep() const { return rep_; }
  std::uint64_t rep_seed() const { return rep_seed_; }
  const Dataset& data() const { return sample_.data; }
  const ToyGroundTruth& truth() const { return sample_.truth; }
  const CandidateSet& candidates() const { return candidates_; }
  std::size_t winner() const { return winner_; }
  const NuisanceSource& source() const { return source_; }

  /// Selector config with its seed mixed with this repetition's seed.
  SelectorConfig seeded(const SelectorConfig& config) const;
  const CrossFit& two_way(const SelectorConfig& seeded_config);

private:
  int rep_;
  std::uint64_t rep_seed_;
  ToySample sample_;
  CandidateSet candidates_;
  std::size_t winner_;
  NuisanceSource source_;
  std::map<std::pair<std::uint64_t, int>, CrossFit> cache_;
};

/// Builds repetition `rep` of an experiment (data, candidates, nuisance source).
Trial make_trial(const ExperimentConfig& config, int rep);

using SelectorFn = std::function<SelectionResult(Trial&)>;

struct NamedSelector {
  std::string name;
  SelectorFn run;
};

/// Runs a standard selector through the trial's shared cross-fit cache.
SelectionResult run_in_trial(SelectorKind kind, Trial& trial, const SelectorConfig& config);

std::vector<NamedSelector> standard_selectors(const ExperimentConfig& config);

struct RepOutcome {
  int rep = 0;
  std::string selector;
  std::optional<SelectionResult> result;
  std::string error;  // nonempty iff result is empty
  bool winner_rejected = false;
  int wrong_selections = 0;
};

struct SelectorSummary {
  std::string name;
  int reps_ok = 0;
  int failures = 0;
  double fwer = 0.0;
  stats::Interval fwer_ci;
  double anws = 0.0;
  double anws_se = 0.0;
  stats::Interval anws_ci;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::size_t p = 0;
  std::size_t winner = 0;
  std::vector<SelectorSummary> summaries;
  std::vector<RepOutcome> reps;  // rep-major, selectors in config order
  nlohmann::json diagnostics = nlohmann::json::object();

  const SelectorSummary& summary(const std::string& name) const;
  /// Per-rep wrong-selection counts; reps where the selector failed are skipped.
  std::vector<double> anws_series(const std::string& name) const;
};

/// FWER indicator and wrong-selection count for one decision.
std::pair<bool, int> score_decision(const SelectionResult& result, std::size_t winner);

ExperimentReport run_experiment(const ExperimentConfig& config);
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::vector<NamedSelector>& selectors);

struct PairedDifference {
  double mean = 0.0;
  stats::Interval ci;
  int reps = 0;
};

/// ANWS(a) - ANWS(b) over repetitions where both succeeded, with a paired
/// percentile-bootstrap CI.
PairedDifference anws_difference(const ExperimentReport& report, const std::string& a,
                                 const std::string& b);
/// Same for the FWER indicator.
PairedDifference fwer_difference(const ExperimentReport& report, const std::string& a,
                                 const std::string& b);

enum class SweepAxis { CandidateCount, SampleFraction };

SweepAxis parse_sweep_axis(std::string_view name);
std::string_view sweep_axis_name(SweepAxis axis);

/// One report per value. Candidate-count sweeps keep the first p noise specs,
/// so trailing (worst) candidates are the ones dropped and the winner stays.
std::vector<ExperimentReport> sweep(const ExperimentConfig& config, SweepAxis axis,
                                    const std::vector<double>& values);

// ---- diagnostics -----------------------------------------------------------

struct PairKs {
  std::size_t r = 0;
  std::size_t s = 0;
  bool skipped = false;
  std::string note;
  double statistic = 0.0;
  double p_value = 1.0;
  double adjusted = 1.0;  // Bonferroni over the pairs tested in this dataset
};

struct CltDatasetResult {
  int rep = 0;
  std::vector<PairKs> pairs;
  double min_adjusted = 1.0;
  bool rejected = false;
};

/// Bootstrap check of the studentized mean of each column of `pair_scores`
/// (n x m): resample units, recenter at the sample mean, studentize, KS test
/// against N(0, 1), Bonferroni across columns. Constant columns are skipped.
CltDatasetResult clt_check(const Eigen::MatrixXd& pair_scores,
                           const std::vector<std::pair<std::size_t, std::size_t>>& labels,
                           int bootstrap, double level, std::uint64_t seed,
                           std::vector<double>* first_bootstrap = nullptr);

/// Columns r < s of the tensor, in lexicographic order.
Eigen::MatrixXd upper_pair_scores(const ScoreTensor& tensor,
                                  std::vector<std::pair<std::size_t, std::size_t>>& labels);

struct CltConfig {
  ExperimentConfig experiment;
  int datasets = 100;
  int bootstrap = 500;
  double level = 0.05;
  int standardized_replicates = 500;
  std::size_t pair_r = 0;
  std::size_t pair_s = 1;
};

struct CltReport {
  std::vector<CltDatasetResult> datasets;
  double rejection_share = 0.0;
  int skipped_pairs = 0;
  std::vector<double> standardized;  // (delta_hat - delta) / sqrt(V/n) per replicate
  stats::KsResult standardized_ks;
  std::vector<double> example_bootstrap;  // first dataset, first tested pair
  std::vector<std::string> notes;
};

CltReport clt_diagnostic(const CltConfig& config);

struct StabilityConfig {
  ToyDims dims;
  std::vector<NoiseSpec> noise = similar_specs();
  SelectorConfig selector;  // lambda (default n^0.4) and inner folds
  NuisanceConfig nuisance;
  bool oracle_nuisance = false;
  int probes = 50;
  std::size_t eval_size = 20000;
  std::uint64_t seed = 0;
};

struct StabilityPoint {
  std::size_t n = 0;
  double lambda = 0.0;
  double delta1_sq = 0.0;  // max over probe cases and candidates of mean (grad_j K_i)^2
  double delta2_sq = 0.0;  // same for the mixed second difference
  std::vector<double> first;   // per probe, max over candidates
  std::vector<double> second;  // per probe, max over candidates
};

struct StabilityReport {
  std::vector<StabilityPoint> points;
  double delta1 = 0.0;  // max over the grid of sqrt(delta1_sq)
  double delta2 = 0.0;
  std::optional<double> slope1;  // log delta1_sq on log n
  std::optional<double> slope2;
  std::vector<std::string> notes;
};

/// Replace-one (and replace-two) perturbations of the centered weighted scores
/// K_{i,r} = Q_{i,r} - E[Q_{i,r} | Z without i], recomputed through the full
/// pipeline. The conditional mean integrates over a fixed evaluation sample.
StabilityReport stability_diagnostic(const std::vector<std::size_t>& n_grid,
                                     const StabilityConfig& config);

}  // namespace htesel
