#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "htesel/data.hpp"
#include "htesel/scores.hpp"
#include "htesel/split.hpp"

namespace htesel {

enum class SelectorKind { Naive, Bonferroni, Proposed, Ablation };

std::string_view selector_name(SelectorKind kind);
/// Accepts "naive", "bonferroni", "proposed", "ablation"; throws ConfigError.
SelectorKind parse_selector(std::string_view name);

struct SelectorConfig {
  double alpha = 0.10;
  std::optional<double> lambda;  // weighting temperature; n^0.4 when unset
  int inner_folds = 5;
  int bootstrap_draws = 10000;
  std::uint64_t seed = 0;

  double lambda_for(std::size_t n) const;
  void validate() const;
};

struct CandidateDecision {
  std::size_t candidate = 0;
  double statistic = 0.0;
  double critical = 0.0;
  bool accepted = false;
};

struct SelectionResult {
  std::string selector;
  double alpha = 0.10;
  std::optional<double> lambda;
  int inner_folds = 0;
  int bootstrap_draws = 0;
  std::uint64_t seed = 0;
  std::vector<CandidateDecision> stats;
  std::vector<std::size_t> accepted;  // increasing

  bool accepts(std::size_t r) const;
};

/// Softmax of lambda * delta with max subtraction. Nonnegative, sums to one.
Eigen::VectorXd exp_weights(const Eigen::VectorXd& delta, double lambda);

/// Weights used for candidate r on inner fold `inner_fold` of `major_fold`,
/// aligned with ScoreTensor::competitors(candidate).
struct WeightBlock {
  std::size_t candidate = 0;
  int major_fold = 0;
  int inner_fold = 0;
  Eigen::VectorXd leave_out_delta;
  Eigen::VectorXd weights;
};

struct ProposedStatistics {
  Eigen::VectorXd sum;    // S_r = sum_i Q_{i,r}
  Eigen::VectorXd sigma;  // sample sd of Q_{., r}
  Eigen::VectorXd z;      // S_r / (sqrt(n) sigma_r)
  Eigen::MatrixXd q;      // n x p, Q_{i,r}
  std::vector<WeightBlock> weights;
};

/// Leave-inner-fold-out exponentially weighted statistics over a scored
/// tensor. Each unit's weights come from the mean score vector of the other
/// inner folds of its own major fold. Throws SelectionError when a cell has
/// fewer than two units or some sigma_r is zero.
ProposedStatistics proposed_statistics(const ScoreTensor& tensor, const SplitPlan& split,
                                       double lambda);

/// Quantile 1 - alpha of max_s G_s / sqrt(cov_ss), G ~ N(0, cov), from
/// `draws` seeded Gaussian draws.
double max_gaussian_critical(const Eigen::MatrixXd& cov, double alpha, int draws,
                             std::uint64_t seed);

// Decisions from an already scored tensor. Naive and Bonferroni ignore the
// inner split; they need only the tensor.
SelectionResult naive_from_tensor(const ScoreTensor& tensor, const SelectorConfig& config);
SelectionResult bonferroni_from_tensor(const ScoreTensor& tensor, const SelectorConfig& config);
SelectionResult proposed_from_tensor(const ScoreTensor& tensor, const SplitPlan& split,
                                     const SelectorConfig& config,
                                     std::string_view name = "proposed");

// End-to-end selectors. The two-way split comes from (n, inner_folds, seed),
// so naive, Bonferroni and proposed share folds for a given config.
SelectionResult naive_select(const Dataset& data, const CandidateSet& candidates,
                             const SelectorConfig& config, const NuisanceSource& source = {});
SelectionResult bonferroni_select(const Dataset& data, const CandidateSet& candidates,
                                  const SelectorConfig& config, const NuisanceSource& source = {});
SelectionResult proposed_select(const Dataset& data, const CandidateSet& candidates,
                                const SelectorConfig& config, const NuisanceSource& source = {});

/// Single-layer variant: nuisances fit in-sample on all units, inner folds
/// drawn over all n. Exists to show what the two-layer split protects against.
SelectionResult single_layer_ablation_select(const Dataset& data, const CandidateSet& candidates,
                                             const SelectorConfig& config,
                                             const NuisanceSource& source = {});

/// The shared cross-fit used by the end-to-end selectors.
CrossFit selector_cross_fit(const Dataset& data, const CandidateSet& candidates,
                            const SelectorConfig& config, const NuisanceSource& source);

/// Scores for the single-layer ablation (in-sample nuisances).
CrossFit single_layer_fit(const Dataset& data, const CandidateSet& candidates,
                          const SelectorConfig& config, const NuisanceSource& source);

SelectionResult run_selector(SelectorKind kind, const Dataset& data,
                             const CandidateSet& candidates, const SelectorConfig& config,
                             const NuisanceSource& source = {});

}  // namespace htesel
