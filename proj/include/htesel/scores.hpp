#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "htesel/data.hpp"
#include "htesel/nuisance.hpp"
#include "htesel/split.hpp"

namespace htesel {

/// AIPW transform t(y - mu1)/e + mu1 - (1 - t)(y - mu0)/(1 - e) - mu0.
inline double pseudo_outcome(int t, double y, const NuisancePrediction& nu) {
  const double treated = t == 1 ? (y - nu.mu1) / nu.e : 0.0;
  const double control = t == 0 ? (y - nu.mu0) / (1.0 - nu.e) : 0.0;
  return treated + nu.mu1 - control - nu.mu0;
}

double pseudo_outcome(const Observation& z, const NuisanceModel& model);

/// One-step relative-error score tau_r^2 - tau_s^2 - 2 (tau_r - tau_s) gamma.
inline double pair_score(double tau_r, double tau_s, double gamma) {
  return (tau_r * tau_r - tau_s * tau_s) - 2.0 * (tau_r - tau_s) * gamma;
}

double pair_score(const Observation& z, double tau_r, double tau_s, const NuisanceModel& model);

Eigen::VectorXd pseudo_outcomes(const Dataset& data, const NuisanceValues& nuisance);

/// Per-unit pairwise scores for every ordered candidate pair. Exactly
/// antisymmetric in (r, s) with a zero diagonal.
class ScoreTensor {
public:
  /// `fold_of[i]` is the major fold that unit i was scored in.
  static ScoreTensor from_pseudo_outcomes(const CandidateSet& candidates,
                                          const Eigen::VectorXd& gamma, std::vector<int> fold_of);

  std::size_t p() const { return p_; }
  std::size_t n() const { return n_; }
  const std::vector<int>& fold_of() const { return fold_of_; }

  double operator()(std::size_t r, std::size_t s, std::size_t i) const {
    return values_[(r * p_ + s) * n_ + i];
  }
  std::span<const double> pair(std::size_t r, std::size_t s) const {
    return {values_.data() + (r * p_ + s) * n_, n_};
  }

  /// Indices s != m in increasing order.
  std::vector<std::size_t> competitors(std::size_t m) const;

  /// n x (p - 1) matrix; column k holds scores of m against competitors(m)[k].
  Eigen::MatrixXd score_vectors(std::size_t m) const;

private:
  ScoreTensor(std::size_t p, std::size_t n) : p_(p), n_(n), values_(p * p * n, 0.0) {}

  std::size_t p_;
  std::size_t n_;
  std::vector<double> values_;
  std::vector<int> fold_of_;
};

/// Scores with unit i in major fold M evaluated under `models[M]`, which must
/// have been fit on exactly the units of the other major fold.
ScoreTensor build_score_tensor(const Dataset& data, const CandidateSet& candidates,
                               const SplitPlan& split, const std::array<NuisanceModel, 2>& models);

/// Scores under given per-unit nuisance values (oracle or precomputed).
ScoreTensor build_score_tensor(const Dataset& data, const CandidateSet& candidates,
                               const NuisanceValues& nuisance, std::vector<int> fold_of);

struct DeltaVector {
  std::size_t reference = 0;
  std::vector<std::size_t> competitors;
  Eigen::VectorXd delta;
};

/// Grand mean of the per-unit scores of m against each competitor.
DeltaVector delta_hat(const ScoreTensor& tensor, std::size_t m);

/// Covariance of the mean score vector: sample covariance / n.
struct CovarianceEstimate {
  Eigen::MatrixXd sigma;
};

CovarianceEstimate cov_hat(const ScoreTensor& tensor, std::size_t m);

/// Average over major folds of the within-fold means. Equals delta_hat's
/// grand mean when the two folds have equal size.
double delta_hat_fold_average(const ScoreTensor& tensor, std::size_t r, std::size_t s);

/// Fitted nuisances (per fold) or fixed per-unit values.
using NuisanceSource = std::variant<NuisanceConfig, NuisanceValues>;

struct CrossFit {
  SplitPlan split;
  NuisanceValues nuisance;  // out-of-fold values actually used for each unit
  ScoreTensor tensor;
};

/// Fit on each major fold, score the other. With NuisanceValues the split only
/// labels folds.
CrossFit cross_fit(const Dataset& data, const CandidateSet& candidates, SplitPlan split,
                   const NuisanceSource& source);

}  // namespace htesel
