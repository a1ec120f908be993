#include "htesel/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "htesel/error.hpp"

namespace htesel {

namespace {

constexpr int kMaxArmRetries = 32;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Eigen::VectorXd uniform_weights(int k, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd w(k);
  for (int i = 0; i < k; ++i) w[i] = u(rng);
  return w;
}

}  // namespace

ToyModel ToyModel::draw(const ToyDims& dims, Rng& rng) {
  if (dims.instrument < 1 || dims.confounder < 1 || dims.adjustment < 1 || dims.distractor < 1) {
    throw ConfigError("toy dims must all be >= 1");
  }
  ToyModel m;
  m.dims_ = dims;
  m.w_ic_ = uniform_weights(dims.instrument + dims.confounder, rng);
  m.w0_ = uniform_weights(dims.confounder + dims.adjustment, rng);
  m.w1_ = uniform_weights(dims.confounder + dims.adjustment, rng);
  return m;
}

ToyUnit ToyModel::draw_unit(Rng& rng) const {
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::normal_distribution<double> outcome_noise(0.0, kToyOutcomeNoiseSd);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int m = dims_.total();
  const int n_ic = dims_.instrument + dims_.confounder;
  const int n_ca = dims_.confounder + dims_.adjustment;

  // Column layout is [I | C | A | D], so IC starts at 0 and CA at instrument.
  Eigen::VectorXd latent(m);
  for (int k = 0; k < m; ++k) latent[k] = std_normal(rng);

  const double logit = latent.head(n_ic).dot(w_ic_) + std_normal(rng);
  const double e = std::clamp(sigmoid(logit), kToyPropensityLow, kToyPropensityHigh);
  const int t = unif(rng) < e ? 1 : 0;

  const auto ca = latent.segment(dims_.instrument, n_ca);
  const double mu0 = ca.dot(w0_) / n_ca + outcome_noise(rng);
  const double mu1 = ca.dot(w1_) / n_ca + outcome_noise(rng);

  return {Observation{std::move(latent), t, t == 1 ? mu1 : mu0}, mu0, mu1, e};
}

ToySample ToyModel::sample(std::size_t n, Rng& rng) const {
  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd x(rows, dims_.total());
  std::vector<int> t(n);
  Eigen::VectorXd y(rows);
  ToyGroundTruth truth{Eigen::VectorXd(rows), Eigen::VectorXd(rows), Eigen::VectorXd(rows),
                       Eigen::VectorXd(rows)};
  for (Eigen::Index i = 0; i < rows; ++i) {
    ToyUnit u = draw_unit(rng);
    x.row(i) = u.obs.x.transpose();
    t[static_cast<std::size_t>(i)] = u.obs.t;
    y[i] = u.obs.y;
    truth.mu0[i] = u.mu0;
    truth.mu1[i] = u.mu1;
    truth.tau[i] = u.mu1 - u.mu0;
    truth.e[i] = u.e;
  }
  return {Dataset(std::move(x), std::move(t), std::move(y)), std::move(truth)};
}

ToySample generate_toy(std::size_t n, const ToyDims& dims, std::uint64_t seed) {
  if (n < 20) throw ConfigError("generate_toy: n must be >= 20");
  Rng weight_rng = make_rng(seed, 0);
  const ToyModel model = ToyModel::draw(dims, weight_rng);
  for (int attempt = 0; attempt < kMaxArmRetries; ++attempt) {
    Rng unit_rng = make_rng(seed, 1 + static_cast<std::uint64_t>(attempt));
    try {
      return model.sample(n, unit_rng);
    } catch (const DataError&) {
      // single-arm draw; retry with the next stream
    }
  }
  throw DataError("generate_toy: could not draw both treatment arms after " +
                  std::to_string(kMaxArmRetries) + " attempts");
}

Eigen::VectorXd draw_candidate_column(double tau, const std::vector<NoiseSpec>& specs, Rng& rng) {
  Eigen::VectorXd col(static_cast<Eigen::Index>(specs.size()));
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (std::size_t r = 0; r < specs.size(); ++r) {
    col[static_cast<Eigen::Index>(r)] = tau + specs[r].mean + specs[r].sd * std_normal(rng);
  }
  return col;
}

CandidateSet make_candidates(const ToyGroundTruth& truth, const std::vector<NoiseSpec>& specs,
                             std::uint64_t seed) {
  if (specs.empty()) throw ConfigError("make_candidates: no noise specs");
  const Eigen::Index n = truth.tau.size();
  Eigen::MatrixXd pred(static_cast<Eigen::Index>(specs.size()), n);
  for (std::size_t r = 0; r < specs.size(); ++r) {
    const NoiseSpec& s = specs[r];
    if (!(s.sd >= 0.0)) throw ConfigError("noise sd must be >= 0");
    Rng rng = make_rng(seed, r);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    const auto row = static_cast<Eigen::Index>(r);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double noise = s.sd > 0.0 ? s.mean + s.sd * std_normal(rng) : s.mean;
      pred(row, i) = truth.tau[i] + noise;
    }
  }
  return CandidateSet(std::move(pred));
}

std::vector<NoiseSpec> competitive_inferior_specs() {
  return {{0.0, 0.1}, {0.03, 0.1}, {0.03, 0.1}, {0.3, 0.1}, {0.3, 0.1}, {0.3, 0.1}, {0.3, 0.1}};
}

std::vector<NoiseSpec> similar_specs() {
  return {{0.0, 0.1}, {0.03, 0.1}, {0.03, 0.1}, {0.03, 0.1}, {0.03, 0.1}};
}

std::size_t winner_index(const std::vector<NoiseSpec>& specs) {
  if (specs.empty()) throw ConfigError("no candidate specs");
  std::size_t best = 0;
  for (std::size_t r = 1; r < specs.size(); ++r) {
    if (specs[r].mse() < specs[best].mse()) best = r;
  }
  for (std::size_t r = 0; r < specs.size(); ++r) {
    if (r != best && specs[r].mse() == specs[best].mse()) {
      throw ConfigError("candidate specs do not identify a unique winner");
    }
  }
  return best;
}

}  // namespace htesel
