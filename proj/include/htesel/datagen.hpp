#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "htesel/data.hpp"
#include "htesel/rng.hpp"

namespace htesel {

/// Latent covariate block sizes: instruments (propensity only), confounders
/// (propensity and outcome), adjustment (outcome only), distractors (neither).
struct ToyDims {
  int instrument = 2;
  int confounder = 2;
  int adjustment = 2;
  int distractor = 2;

  int total() const { return instrument + confounder + adjustment + distractor; }
};

/// Per-unit truth behind a toy dataset. mu0/mu1 include the unit-level
/// outcome noise, so tau = mu1 - mu0 exactly and Y = mu_T.
struct ToyGroundTruth {
  Eigen::VectorXd tau;
  Eigen::VectorXd mu0;
  Eigen::VectorXd mu1;
  Eigen::VectorXd e;  // realized assignment probability, in [0.1, 0.9]
};

struct ToySample {
  Dataset data;
  ToyGroundTruth truth;
};

struct ToyUnit {
  Observation obs;
  double mu0 = 0.0;
  double mu1 = 0.0;
  double e = 0.5;
};

inline constexpr double kToyPropensityLow = 0.1;
inline constexpr double kToyPropensityHigh = 0.9;
inline constexpr double kToyOutcomeNoiseSd = 0.5;

/// Linear toy DGP with fixed weights. Weights are Uniform(-1, 1).
class ToyModel {
public:
  static ToyModel draw(const ToyDims& dims, Rng& rng);

  const ToyDims& dims() const { return dims_; }
  const Eigen::VectorXd& propensity_weights() const { return w_ic_; }
  const Eigen::VectorXd& control_weights() const { return w0_; }
  const Eigen::VectorXd& treated_weights() const { return w1_; }

  ToyUnit draw_unit(Rng& rng) const;

  /// n units; throws DataError if the draw has a single treatment arm.
  ToySample sample(std::size_t n, Rng& rng) const;

private:
  ToyDims dims_;
  Eigen::VectorXd w_ic_;
  Eigen::VectorXd w0_;
  Eigen::VectorXd w1_;
};

/// Deterministic in (n, dims, seed). Redraws units (not weights) when an arm
/// comes out empty, up to a fixed cap, then throws DataError.
ToySample generate_toy(std::size_t n, const ToyDims& dims, std::uint64_t seed);

/// Additive Gaussian perturbation N(mean, sd^2) of the true effect.
struct NoiseSpec {
  double mean = 0.0;
  double sd = 0.0;

  /// Population MSE of the resulting candidate against tau.
  double mse() const { return mean * mean + sd * sd; }
};

/// Row r is tau + iid N(spec_r.mean, spec_r.sd^2). Row r's noise depends only
/// on (seed, r), so dropping trailing specs leaves earlier rows unchanged.
CandidateSet make_candidates(const ToyGroundTruth& truth, const std::vector<NoiseSpec>& specs,
                             std::uint64_t seed);

/// One column of noisy-oracle predictions for a single unit.
Eigen::VectorXd draw_candidate_column(double tau, const std::vector<NoiseSpec>& specs, Rng& rng);

/// Three competitive candidates followed by four clearly inferior ones.
std::vector<NoiseSpec> competitive_inferior_specs();
/// Five near-identical candidates; the first is the winner.
std::vector<NoiseSpec> similar_specs();

/// Index of the candidate with strictly smallest mse(); throws ConfigError on ties.
std::size_t winner_index(const std::vector<NoiseSpec>& specs);

/// Population relative error E[(c_r - tau)^2 - (c_s - tau)^2].
inline double population_delta(const NoiseSpec& r, const NoiseSpec& s) {
  return r.mse() - s.mse();
}

}  // namespace htesel
