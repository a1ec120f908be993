#include "htesel/selectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "htesel/error.hpp"
#include "htesel/rng.hpp"
#include "htesel/stats.hpp"

namespace htesel {

namespace {

constexpr double kPsdTolerance = 1e-8;

SelectionResult make_result(std::string_view name, const SelectorConfig& config,
                            std::optional<double> lambda) {
  SelectionResult out;
  out.selector = std::string(name);
  out.alpha = config.alpha;
  out.lambda = lambda;
  out.inner_folds = config.inner_folds;
  out.bootstrap_draws = config.bootstrap_draws;
  out.seed = config.seed;
  return out;
}

void record(SelectionResult& result, std::size_t candidate, double statistic, double critical,
            bool accepted) {
  result.stats.push_back({candidate, statistic, critical, accepted});
  if (accepted) result.accepted.push_back(candidate);
}

// Per-candidate standardized pairwise statistics S_{m,s} = delta / sqrt(Sigma_ss).
struct PairwiseStats {
  Eigen::VectorXd standardized;
  Eigen::MatrixXd cov;
};

PairwiseStats pairwise_stats(const ScoreTensor& tensor, std::size_t m) {
  const DeltaVector dv = delta_hat(tensor, m);
  Eigen::MatrixXd cov = cov_hat(tensor, m).sigma;
  const Eigen::VectorXd diag = cov.diagonal();
  for (Eigen::Index k = 0; k < diag.size(); ++k) {
    if (!(diag[k] > 0.0)) {
      throw SelectionError(fmt::format(
          "score variance of candidate {} against {} is zero", m,
          dv.competitors[static_cast<std::size_t>(k)]));
    }
  }
  return {dv.delta.array() / diag.array().sqrt(), std::move(cov)};
}

void check_tensor(const ScoreTensor& tensor) {
  if (tensor.p() < 2) throw SelectionError("selection needs at least two candidates");
  if (tensor.n() < 2) throw SelectionError("selection needs at least two units");
}

}  // namespace

std::string_view selector_name(SelectorKind kind) {
  switch (kind) {
    case SelectorKind::Naive: return "naive";
    case SelectorKind::Bonferroni: return "bonferroni";
    case SelectorKind::Proposed: return "proposed";
    case SelectorKind::Ablation: return "ablation";
  }
  return "unknown";
}

SelectorKind parse_selector(std::string_view name) {
  if (name == "naive") return SelectorKind::Naive;
  if (name == "bonferroni") return SelectorKind::Bonferroni;
  if (name == "proposed") return SelectorKind::Proposed;
  if (name == "ablation") return SelectorKind::Ablation;
  throw ConfigError(fmt::format("unknown selector '{}'", name));
}

double SelectorConfig::lambda_for(std::size_t n) const {
  return lambda.value_or(std::pow(static_cast<double>(n), 0.4));
}

void SelectorConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (lambda && !(*lambda >= 0.0 && std::isfinite(*lambda))) {
    throw ConfigError("lambda must be finite and >= 0");
  }
  if (inner_folds < 2) throw ConfigError("inner_folds must be >= 2");
  if (bootstrap_draws < 1000) throw ConfigError("bootstrap_draws must be >= 1000");
}

bool SelectionResult::accepts(std::size_t r) const {
  return std::binary_search(accepted.begin(), accepted.end(), r);
}

Eigen::VectorXd exp_weights(const Eigen::VectorXd& delta, double lambda) {
  if (delta.size() == 0) throw SelectionError("exp_weights: empty input");
  if (!delta.allFinite() || !std::isfinite(lambda)) {
    throw SelectionError("exp_weights: non-finite input");
  }
  const double top = delta.maxCoeff();
  Eigen::VectorXd w = (lambda * (delta.array() - top)).exp();
  return w / w.sum();
}

ProposedStatistics proposed_statistics(const ScoreTensor& tensor, const SplitPlan& split,
                                       double lambda) {
  check_tensor(tensor);
  if (split.n() != tensor.n()) throw SelectionError("split plan does not match tensor size");
  split.validate(2);

  const std::size_t p = tensor.p();
  const std::size_t n = tensor.n();
  const auto k = static_cast<Eigen::Index>(p - 1);
  const int cells = split.major_folds * split.inner_folds;
  std::vector<int> cell_of(n);
  std::vector<double> cell_count(static_cast<std::size_t>(cells), 0.0);
  std::vector<double> major_count(static_cast<std::size_t>(split.major_folds), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cell_of[i] = split.major[i] * split.inner_folds + split.inner[i];
    cell_count[static_cast<std::size_t>(cell_of[i])] += 1.0;
    major_count[static_cast<std::size_t>(split.major[i])] += 1.0;
  }

  ProposedStatistics out;
  out.sum.resize(static_cast<Eigen::Index>(p));
  out.sigma.resize(static_cast<Eigen::Index>(p));
  out.z.resize(static_cast<Eigen::Index>(p));
  out.q.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));

  for (std::size_t r = 0; r < p; ++r) {
    const Eigen::MatrixXd scores = tensor.score_vectors(r);  // n x (p - 1)

    Eigen::MatrixXd cell_sum = Eigen::MatrixXd::Zero(cells, k);
    for (std::size_t i = 0; i < n; ++i) {
      cell_sum.row(cell_of[i]) += scores.row(static_cast<Eigen::Index>(i));
    }
    Eigen::MatrixXd major_sum = Eigen::MatrixXd::Zero(split.major_folds, k);
    for (int c = 0; c < cells; ++c) major_sum.row(c / split.inner_folds) += cell_sum.row(c);

    // Weights for each cell from the mean score vector of M minus that cell.
    Eigen::MatrixXd cell_weights(cells, k);
    for (int c = 0; c < cells; ++c) {
      const int major = c / split.inner_folds;
      const double rest = major_count[static_cast<std::size_t>(major)] -
                          cell_count[static_cast<std::size_t>(c)];
      if (rest < 1.0) throw SelectionError("major fold has a single inner fold populated");
      const Eigen::VectorXd leave_out =
          ((major_sum.row(major) - cell_sum.row(c)) / rest).transpose();
      const Eigen::VectorXd w = exp_weights(leave_out, lambda);
      cell_weights.row(c) = w.transpose();
      out.weights.push_back({r, major, c % split.inner_folds, leave_out, w});
    }

    const auto col = static_cast<Eigen::Index>(r);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      out.q(row, col) = scores.row(row).dot(cell_weights.row(cell_of[i]));
    }
    const auto qcol = out.q.col(col);
    const double s = qcol.sum();
    const std::span<const double> qspan(qcol.data(), n);
    const double sigma = stats::sample_sd(qspan);
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw SelectionError(fmt::format("weighted score of candidate {} has zero variance", r));
    }
    out.sum[col] = s;
    out.sigma[col] = sigma;
    out.z[col] = s / (std::sqrt(static_cast<double>(n)) * sigma);
  }
  return out;
}

double max_gaussian_critical(const Eigen::MatrixXd& cov, double alpha, int draws,
                             std::uint64_t seed) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) {
    throw SelectionError("covariance must be square and nonempty");
  }
  if (draws < 1) throw SelectionError("need at least one bootstrap draw");
  const Eigen::VectorXd inv_sd = cov.diagonal().array().rsqrt();
  if (!inv_sd.allFinite()) throw SelectionError("covariance has a zero diagonal entry");
  Eigen::MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  corr = 0.5 * (corr + corr.transpose()).eval();

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  if (eig.info() != Eigen::Success) throw SelectionError("covariance eigendecomposition failed");
  Eigen::VectorXd evals = eig.eigenvalues();
  if (evals.minCoeff() < -kPsdTolerance * std::max(1.0, evals.maxCoeff())) {
    throw SelectionError("covariance is not positive semidefinite");
  }
  evals = evals.cwiseMax(0.0);
  const Eigen::MatrixXd factor = eig.eigenvectors() * evals.cwiseSqrt().asDiagonal();

  Rng rng = make_rng(seed, 0);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const Eigen::Index dim = corr.rows();
  Eigen::VectorXd z(dim);
  std::vector<double> maxima(static_cast<std::size_t>(draws));
  for (auto& m : maxima) {
    for (Eigen::Index j = 0; j < dim; ++j) z[j] = std_normal(rng);
    m = (factor * z).maxCoeff();
  }
  std::sort(maxima.begin(), maxima.end());
  return stats::quantile_sorted(maxima, 1.0 - alpha);
}

SelectionResult naive_from_tensor(const ScoreTensor& tensor, const SelectorConfig& config) {
  config.validate();
  check_tensor(tensor);
  SelectionResult result = make_result("naive", config, std::nullopt);
  for (std::size_t m = 0; m < tensor.p(); ++m) {
    const PairwiseStats ps = pairwise_stats(tensor, m);
    const double stat = ps.standardized.maxCoeff();
    const double critical = max_gaussian_critical(ps.cov, config.alpha, config.bootstrap_draws,
                                                  derive_seed(config.seed, m));
    record(result, m, stat, critical, stat <= critical);
  }
  return result;
}

SelectionResult bonferroni_from_tensor(const ScoreTensor& tensor, const SelectorConfig& config) {
  config.validate();
  check_tensor(tensor);
  SelectionResult result = make_result("bonferroni", config, std::nullopt);
  const double per_pair = config.alpha / static_cast<double>(tensor.p() - 1);
  const double critical = stats::normal_quantile(1.0 - per_pair);
  for (std::size_t m = 0; m < tensor.p(); ++m) {
    const double stat = pairwise_stats(tensor, m).standardized.maxCoeff();
    record(result, m, stat, critical, stat <= critical);
  }
  return result;
}

SelectionResult proposed_from_tensor(const ScoreTensor& tensor, const SplitPlan& split,
                                     const SelectorConfig& config, std::string_view name) {
  config.validate();
  const double lambda = config.lambda_for(tensor.n());
  const ProposedStatistics st = proposed_statistics(tensor, split, lambda);
  const double critical = stats::normal_quantile(1.0 - config.alpha);
  SelectionResult result = make_result(name, config, lambda);
  for (std::size_t r = 0; r < tensor.p(); ++r) {
    const double z = st.z[static_cast<Eigen::Index>(r)];
    record(result, r, z, critical, z < critical);
  }
  return result;
}

CrossFit selector_cross_fit(const Dataset& data, const CandidateSet& candidates,
                            const SelectorConfig& config, const NuisanceSource& source) {
  config.validate();
  return cross_fit(data, candidates, two_way_split(data.n(), config.inner_folds, config.seed),
                   source);
}

CrossFit single_layer_fit(const Dataset& data, const CandidateSet& candidates,
                          const SelectorConfig& config, const NuisanceSource& source) {
  config.validate();
  SplitPlan split = single_layer_split(data.n(), config.inner_folds, config.seed);
  NuisanceValues values = std::holds_alternative<NuisanceValues>(source)
                              ? std::get<NuisanceValues>(source)
                              : predict_all(fit_nuisance(data, std::get<NuisanceConfig>(source)),
                                            data);
  auto tensor = build_score_tensor(data, candidates, values, split.major);
  return {std::move(split), std::move(values), std::move(tensor)};
}

SelectionResult naive_select(const Dataset& data, const CandidateSet& candidates,
                             const SelectorConfig& config, const NuisanceSource& source) {
  return naive_from_tensor(selector_cross_fit(data, candidates, config, source).tensor, config);
}

SelectionResult bonferroni_select(const Dataset& data, const CandidateSet& candidates,
                                  const SelectorConfig& config, const NuisanceSource& source) {
  return bonferroni_from_tensor(selector_cross_fit(data, candidates, config, source).tensor,
                                config);
}

SelectionResult proposed_select(const Dataset& data, const CandidateSet& candidates,
                                const SelectorConfig& config, const NuisanceSource& source) {
  const CrossFit cf = selector_cross_fit(data, candidates, config, source);
  return proposed_from_tensor(cf.tensor, cf.split, config, "proposed");
}

SelectionResult single_layer_ablation_select(const Dataset& data, const CandidateSet& candidates,
                                             const SelectorConfig& config,
                                             const NuisanceSource& source) {
  const CrossFit cf = single_layer_fit(data, candidates, config, source);
  return proposed_from_tensor(cf.tensor, cf.split, config, "ablation");
}

SelectionResult run_selector(SelectorKind kind, const Dataset& data,
                             const CandidateSet& candidates, const SelectorConfig& config,
                             const NuisanceSource& source) {
  switch (kind) {
    case SelectorKind::Naive: return naive_select(data, candidates, config, source);
    case SelectorKind::Bonferroni: return bonferroni_select(data, candidates, config, source);
    case SelectorKind::Proposed: return proposed_select(data, candidates, config, source);
    case SelectorKind::Ablation:
      return single_layer_ablation_select(data, candidates, config, source);
  }
  throw ConfigError("unknown selector kind");
}

}  // namespace htesel
