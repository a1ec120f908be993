#include "htesel/scores.hpp"

#include <cmath>

#include <fmt/format.h>

#include "htesel/error.hpp"

namespace htesel {

double pseudo_outcome(const Observation& z, const NuisanceModel& model) {
  return pseudo_outcome(z.t, z.y, predict(model, z.x));
}

double pair_score(const Observation& z, double tau_r, double tau_s, const NuisanceModel& model) {
  return pair_score(tau_r, tau_s, pseudo_outcome(z, model));
}

Eigen::VectorXd pseudo_outcomes(const Dataset& data, const NuisanceValues& nuisance) {
  if (nuisance.size() != data.n()) throw DataError("nuisance values do not match dataset size");
  Eigen::VectorXd gamma(static_cast<Eigen::Index>(data.n()));
  for (Eigen::Index i = 0; i < gamma.size(); ++i) {
    gamma[i] = pseudo_outcome(data.t()[static_cast<std::size_t>(i)], data.y()[i],
                              {nuisance.mu0[i], nuisance.mu1[i], nuisance.e[i]});
  }
  return gamma;
}

ScoreTensor ScoreTensor::from_pseudo_outcomes(const CandidateSet& candidates,
                                              const Eigen::VectorXd& gamma,
                                              std::vector<int> fold_of) {
  const std::size_t p = candidates.p();
  const std::size_t n = candidates.n();
  if (static_cast<std::size_t>(gamma.size()) != n || fold_of.size() != n) {
    throw DataError("score inputs disagree on the number of units");
  }
  if (!gamma.allFinite()) throw DataError("pseudo-outcomes are not finite");
  ScoreTensor out(p, n);
  out.fold_of_ = std::move(fold_of);
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t s = r + 1; s < p; ++s) {
      double* fwd = out.values_.data() + (r * p + s) * n;
      double* bwd = out.values_.data() + (s * p + r) * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = pair_score(candidates(r, i), candidates(s, i),
                                    gamma[static_cast<Eigen::Index>(i)]);
        fwd[i] = v;
        bwd[i] = -v;
      }
    }
  }
  return out;
}

std::vector<std::size_t> ScoreTensor::competitors(std::size_t m) const {
  std::vector<std::size_t> out;
  out.reserve(p_ - 1);
  for (std::size_t s = 0; s < p_; ++s) {
    if (s != m) out.push_back(s);
  }
  return out;
}

Eigen::MatrixXd ScoreTensor::score_vectors(std::size_t m) const {
  const auto comp = competitors(m);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(comp.size()));
  for (std::size_t k = 0; k < comp.size(); ++k) {
    const auto col = pair(m, comp[k]);
    out.col(static_cast<Eigen::Index>(k)) =
        Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(n_));
  }
  return out;
}

namespace {

NuisanceValues out_of_fold_values(const Dataset& data, const SplitPlan& split,
                                  const std::array<NuisanceModel, 2>& models) {
  if (split.n() != data.n()) throw DataError("split plan does not match dataset size");
  if (split.major_folds != 2) throw SelectionError("cross-fitted scores need two major folds");
  const auto n = static_cast<Eigen::Index>(data.n());
  NuisanceValues values{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int fold = 0; fold < 2; ++fold) {
    const auto opposite = split.members(1 - fold);
    const NuisanceModel& model = models[static_cast<std::size_t>(fold)];
    if (model.train_size != opposite.size() ||
        model.train_fingerprint != fingerprint_indices(opposite)) {
      throw SelectionError(
          fmt::format("nuisance model for fold {} was not trained on the opposite fold", fold));
    }
    predict_into(model, data, split.members(fold), values);
  }
  return values;
}

}  // namespace

ScoreTensor build_score_tensor(const Dataset& data, const CandidateSet& candidates,
                               const SplitPlan& split, const std::array<NuisanceModel, 2>& models) {
  return build_score_tensor(data, candidates, out_of_fold_values(data, split, models), split.major);
}

ScoreTensor build_score_tensor(const Dataset& data, const CandidateSet& candidates,
                               const NuisanceValues& nuisance, std::vector<int> fold_of) {
  if (candidates.n() != data.n()) {
    throw DataError("candidate predictions do not match dataset size");
  }
  return ScoreTensor::from_pseudo_outcomes(candidates, pseudo_outcomes(data, nuisance),
                                           std::move(fold_of));
}

DeltaVector delta_hat(const ScoreTensor& tensor, std::size_t m) {
  if (tensor.n() < 2) throw SelectionError("delta_hat needs at least two units");
  if (m >= tensor.p()) throw SelectionError("reference candidate out of range");
  DeltaVector out;
  out.reference = m;
  out.competitors = tensor.competitors(m);
  out.delta.resize(static_cast<Eigen::Index>(out.competitors.size()));
  for (std::size_t k = 0; k < out.competitors.size(); ++k) {
    const auto col = tensor.pair(m, out.competitors[k]);
    double sum = 0.0;
    for (double v : col) sum += v;
    out.delta[static_cast<Eigen::Index>(k)] = sum / static_cast<double>(tensor.n());
  }
  return out;
}

CovarianceEstimate cov_hat(const ScoreTensor& tensor, std::size_t m) {
  if (tensor.n() < 2) throw SelectionError("cov_hat needs at least two units");
  if (m >= tensor.p()) throw SelectionError("reference candidate out of range");
  const Eigen::MatrixXd scores = tensor.score_vectors(m);
  const Eigen::MatrixXd centered = scores.rowwise() - scores.colwise().mean();
  const auto n = static_cast<double>(tensor.n());
  Eigen::MatrixXd sigma = (centered.transpose() * centered) / ((n - 1.0) * n);
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  return {std::move(sigma)};
}

double delta_hat_fold_average(const ScoreTensor& tensor, std::size_t r, std::size_t s) {
  const auto col = tensor.pair(r, s);
  std::array<double, 2> sum{0.0, 0.0};
  std::array<std::size_t, 2> count{0, 0};
  for (std::size_t i = 0; i < tensor.n(); ++i) {
    const auto f = static_cast<std::size_t>(tensor.fold_of()[i]);
    if (f > 1) throw SelectionError("fold average needs fold labels 0 or 1");
    sum[f] += col[i];
    ++count[f];
  }
  double acc = 0.0;
  int folds = 0;
  for (std::size_t f = 0; f < 2; ++f) {
    if (count[f] > 0) {
      acc += sum[f] / static_cast<double>(count[f]);
      ++folds;
    }
  }
  return acc / folds;
}

CrossFit cross_fit(const Dataset& data, const CandidateSet& candidates, SplitPlan split,
                   const NuisanceSource& source) {
  if (split.n() != data.n()) throw DataError("split plan does not match dataset size");
  if (const auto* oracle = std::get_if<NuisanceValues>(&source)) {
    auto tensor = build_score_tensor(data, candidates, *oracle, split.major);
    return {std::move(split), *oracle, std::move(tensor)};
  }
  const auto& config = std::get<NuisanceConfig>(source);
  if (split.major_folds != 2) throw SelectionError("cross-fitting needs two major folds");
  const auto fold_a = split.members(0);
  const auto fold_b = split.members(1);
  // Units in A are scored with the model trained on B and vice versa.
  const std::array<NuisanceModel, 2> models{fit_nuisance(data, fold_b, config),
                                            fit_nuisance(data, fold_a, config)};
  auto values = out_of_fold_values(data, split, models);
  auto tensor = build_score_tensor(data, candidates, values, split.major);
  return {std::move(split), std::move(values), std::move(tensor)};
}

}  // namespace htesel
