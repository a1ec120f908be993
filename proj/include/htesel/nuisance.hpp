#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "htesel/data.hpp"

namespace htesel {

/// Regularization defaults scale with the training-set size m:
/// ridge_lambda = logistic_l2 = 1e-3 * m when left unset.
struct NuisanceConfig {
  std::optional<double> ridge_lambda;
  std::optional<double> logistic_l2;
  double clip_eta = 0.05;
  int max_iter = 100;
  double tol = 1e-10;

  void validate() const;
};

struct LinearFit {
  Eigen::VectorXd coef;
  double intercept = 0.0;

  double operator()(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return intercept + coef.dot(x);
  }
};

struct NuisancePrediction {
  double mu0 = 0.0;
  double mu1 = 0.0;
  double e = 0.5;
};

/// Outcome regressions for both arms plus a clipped logistic propensity.
/// Immutable after fit.
struct NuisanceModel {
  LinearFit mu0;
  LinearFit mu1;
  LinearFit propensity_logit;
  double clip_eta = 0.05;
  std::size_t train_size = 0;
  std::uint64_t train_fingerprint = 0;  // fingerprint_indices() of the training set

  std::size_t dim() const { return static_cast<std::size_t>(mu0.coef.size()); }
};

/// Per-unit nuisance values, either predicted out of fold or known oracles.
struct NuisanceValues {
  Eigen::VectorXd mu0;
  Eigen::VectorXd mu1;
  Eigen::VectorXd e;

  std::size_t size() const { return static_cast<std::size_t>(e.size()); }
};

/// Order-independent fingerprint of an index set.
std::uint64_t fingerprint_indices(std::span<const std::size_t> indices);

/// Ridge least squares per arm with an unpenalized intercept.
LinearFit fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda);

/// L2-penalized logistic regression (unpenalized intercept) by damped Newton.
LinearFit fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& t, double l2, int max_iter,
                       double tol);

/// Requires at least d + 2 units of each arm among `indices`.
NuisanceModel fit_nuisance(const Dataset& data, std::span<const std::size_t> indices,
                           const NuisanceConfig& config);
NuisanceModel fit_nuisance(const Dataset& data, const NuisanceConfig& config);

NuisancePrediction predict(const NuisanceModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Predictions for the listed units, written into `out` at those positions.
void predict_into(const NuisanceModel& model, const Dataset& data,
                  std::span<const std::size_t> indices, NuisanceValues& out);

NuisanceValues predict_all(const NuisanceModel& model, const Dataset& data);

/// Root-mean-square change of (mu0, mu1) over `grid` rows between the model
/// fit on `indices` and the model fit with unit `r` replaced.
double stability_probe(const Dataset& data, std::span<const std::size_t> indices,
                       const NuisanceConfig& config, std::size_t r, const Observation& replacement,
                       const Eigen::MatrixXd& grid);

/// Mixed second difference f(S) - f(S^r) - f(S^t) + f(S^{r,t}) of the same
/// outcome predictions, as an RMS over `grid`.
double stability_probe_second(const Dataset& data, std::span<const std::size_t> indices,
                              const NuisanceConfig& config, std::size_t r,
                              const Observation& replacement_r, std::size_t t,
                              const Observation& replacement_t, const Eigen::MatrixXd& grid);

}  // namespace htesel
