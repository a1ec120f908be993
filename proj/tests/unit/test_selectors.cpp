#include <doctest.h>

#include <cmath>
#include <numeric>

#include "htesel/datagen.hpp"
#include "htesel/error.hpp"
#include "htesel/rng.hpp"
#include "htesel/selectors.hpp"
#include "htesel/stats.hpp"

using namespace htesel;

namespace {

// Direct evaluation of the leave-cell-out weighted statistic, unit by unit.
Eigen::VectorXd reference_z(const ScoreTensor& t, const SplitPlan& split, double lambda) {
  const std::size_t n = t.n();
  const std::size_t p = t.p();
  Eigen::VectorXd z(static_cast<Eigen::Index>(p));
  for (std::size_t r = 0; r < p; ++r) {
    std::vector<double> q(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> mean(p, 0.0);
      double count = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (split.major[j] != split.major[i] || split.inner[j] == split.inner[i]) continue;
        count += 1.0;
        for (std::size_t s = 0; s < p; ++s) mean[s] += t(r, s, j);
      }
      double top = -1e300;
      for (std::size_t s = 0; s < p; ++s) {
        if (s == r) continue;
        mean[s] /= count;
        top = std::max(top, mean[s]);
      }
      double norm = 0.0;
      double acc = 0.0;
      for (std::size_t s = 0; s < p; ++s) {
        if (s == r) continue;
        const double w = std::exp(lambda * (mean[s] - top));
        norm += w;
        acc += w * t(r, s, i);
      }
      q[i] = acc / norm;
    }
    const double sum = std::accumulate(q.begin(), q.end(), 0.0);
    const double m = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : q) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    z[static_cast<Eigen::Index>(r)] = sum / (std::sqrt(static_cast<double>(n)) * sd);
  }
  return z;
}

NuisanceValues oracle_of(const ToySample& s) { return {s.truth.mu0, s.truth.mu1, s.truth.e}; }

}  // namespace

TEST_CASE("exponential weights") {
  const Eigen::VectorXd w = exp_weights(Eigen::Vector2d(1.0, 0.0), 1.0);
  CHECK(w[0] == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(0.2689414213699951).epsilon(1e-14));

  const Eigen::VectorXd u = exp_weights(Eigen::Vector3d(5.0, -2.0, 0.1), 0.0);
  for (int k = 0; k < 3; ++k) CHECK(u[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Rng rng = make_rng(2, 0);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd d(6);
    for (int k = 0; k < 6; ++k) d[k] = 50.0 * g(rng);
    const double lambda = std::abs(10.0 * g(rng));
    const Eigen::VectorXd a = exp_weights(d, lambda);
    CHECK(a.minCoeff() >= 0.0);
    CHECK(std::abs(a.sum() - 1.0) < 1e-12);
    const Eigen::VectorXd b = exp_weights((d.array() + 123.0).matrix(), lambda);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Huge arguments do not overflow.
  const Eigen::VectorXd big = exp_weights(Eigen::Vector2d(1e6, 0.0), 1e3);
  CHECK(big[0] == 1.0);
  CHECK(big[1] < 1e-300);
}

TEST_CASE("proposed statistic matches a direct unit-by-unit computation") {
  const ToySample s = generate_toy(200, {}, 3);
  const CandidateSet c = make_candidates(s.truth, competitive_inferior_specs(), 4);
  const CrossFit cf = cross_fit(s.data, c, two_way_split(200, 5, 8), NuisanceConfig{});
  for (double lambda : {0.0, 1.0, 8.0, 200.0}) {
    CAPTURE(lambda);
    const ProposedStatistics st = proposed_statistics(cf.tensor, cf.split, lambda);
    const Eigen::VectorXd ref = reference_z(cf.tensor, cf.split, lambda);
    CHECK((st.z - ref).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("weight blocks are on the simplex and leave their cell out") {
  const ToySample s = generate_toy(300, {}, 5);
  const CandidateSet c = make_candidates(s.truth, similar_specs(), 6);
  const CrossFit cf = cross_fit(s.data, c, two_way_split(300, 5, 1), oracle_of(s));
  const ProposedStatistics st = proposed_statistics(cf.tensor, cf.split, 17.0);
  CHECK(st.weights.size() == 5 * 2 * 5);
  for (const auto& b : st.weights) {
    CHECK(std::abs(b.weights.sum() - 1.0) < 1e-12);
    CHECK(b.weights.minCoeff() >= 0.0);
    // Recompute the leave-out mean for this block.
    const auto comp = cf.tensor.competitors(b.candidate);
    double count = 0.0;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(comp.size()));
    for (std::size_t i = 0; i < cf.tensor.n(); ++i) {
      if (cf.split.major[i] != b.major_fold || cf.split.inner[i] == b.inner_fold) continue;
      count += 1.0;
      for (std::size_t k = 0; k < comp.size(); ++k) {
        mean[static_cast<Eigen::Index>(k)] += cf.tensor(b.candidate, comp[k], i);
      }
    }
    mean /= count;
    CHECK((mean - b.leave_out_delta).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("lambda = 0 reduces to the plain average over competitors") {
  const ToySample s = generate_toy(400, {}, 7);
  const CandidateSet c = make_candidates(s.truth, similar_specs(), 8);
  const CrossFit cf = cross_fit(s.data, c, two_way_split(400, 5, 2), oracle_of(s));
  const ProposedStatistics st = proposed_statistics(cf.tensor, cf.split, 0.0);
  for (std::size_t r = 0; r < cf.tensor.p(); ++r) {
    const Eigen::VectorXd avg = cf.tensor.score_vectors(r).rowwise().mean();
    const double sd = std::sqrt((avg.array() - avg.mean()).square().sum() / 399.0);
    CHECK(st.z[static_cast<Eigen::Index>(r)] ==
          doctest::Approx(avg.sum() / (std::sqrt(400.0) * sd)).epsilon(1e-10));
  }
}

TEST_CASE("proposed rejects a clearly worse candidate") {
  const std::vector<NoiseSpec> specs{{0.0, 0.1}, {1.0, 0.1}};
  SelectorConfig cfg;
  int correct = 0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    const auto r = static_cast<std::uint64_t>(rep);
    const ToySample s = generate_toy(4000, {}, derive_seed(31, r));
    const CandidateSet c = make_candidates(s.truth, specs, derive_seed(32, r));
    cfg.seed = r;
    const SelectionResult res = proposed_select(s.data, c, cfg, NuisanceConfig{});
    correct += res.accepts(0) && !res.accepts(1) ? 1 : 0;
  }
  CHECK(correct >= 95);
}

TEST_CASE("proposed is calibrated when candidates share a spec") {
  // Two candidates with the same noise law: each is accepted with
  // probability close to 1 - alpha.
  const std::vector<NoiseSpec> specs{{0.0, 0.1}, {0.0, 0.1}};
  SelectorConfig cfg;
  const int reps = 500;
  int accepted[2] = {0, 0};
  for (int rep = 0; rep < reps; ++rep) {
    const auto r = static_cast<std::uint64_t>(rep);
    const ToySample s = generate_toy(1000, {}, derive_seed(41, r));
    const CandidateSet c = make_candidates(s.truth, specs, derive_seed(42, r));
    cfg.seed = r;
    const SelectionResult res = proposed_select(s.data, c, cfg, oracle_of(s));
    for (std::size_t k = 0; k < 2; ++k) accepted[k] += res.accepts(k) ? 1 : 0;
  }
  for (int k = 0; k < 2; ++k) {
    const double rate = static_cast<double>(accepted[k]) / reps;
    CAPTURE(k);
    CAPTURE(rate);
    CHECK(std::abs(rate - 0.9) <= 3.0 * std::sqrt(0.1 * 0.9 / reps));
  }
}

TEST_CASE("max-Gaussian critical values") {
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  CHECK(std::abs(max_gaussian_critical(one, 0.1, 100000, 3) - stats::normal_quantile(0.9)) < 0.05);

  // Independent coordinates: P(max <= c) = Phi(c)^6.
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(6, 6);
  const double exact = stats::normal_quantile(std::pow(0.9, 1.0 / 6.0));
  CHECK(exact == doctest::Approx(2.1105).epsilon(1e-4));
  CHECK(std::abs(max_gaussian_critical(eye, 0.1, 100000, 4) - exact) < 0.03);

  // Scale invariance and perfect correlation.
  const Eigen::MatrixXd scaled = 9.0 * eye;
  CHECK(max_gaussian_critical(scaled, 0.1, 20000, 5) == max_gaussian_critical(eye, 0.1, 20000, 5));
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 4);
  CHECK(std::abs(max_gaussian_critical(ones, 0.1, 100000, 6) - stats::normal_quantile(0.9)) < 0.05);

  CHECK(max_gaussian_critical(eye, 0.05, 20000, 7) > max_gaussian_critical(eye, 0.1, 20000, 7));
  CHECK(max_gaussian_critical(eye, 0.1, 20000, 7) == max_gaussian_critical(eye, 0.1, 20000, 7));

  Eigen::MatrixXd degenerate = eye;
  degenerate(2, 2) = 0.0;
  CHECK_THROWS_AS(max_gaussian_critical(degenerate, 0.1, 1000, 1), SelectionError);
  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(2, 2);
  indefinite(0, 1) = indefinite(1, 0) = 2.0;
  CHECK_THROWS_AS(max_gaussian_critical(indefinite, 0.1, 1000, 1), SelectionError);
}

TEST_CASE("naive and Bonferroni decisions") {
  const ToySample s = generate_toy(1000, {}, 12);
  SelectorConfig cfg;
  cfg.seed = 5;

  SUBCASE("two candidates: both reduce to the one-sided z-test") {
    const CandidateSet c = make_candidates(s.truth, {{0.0, 0.1}, {0.05, 0.1}}, 13);
    const CrossFit cf = selector_cross_fit(s.data, c, cfg, NuisanceConfig{});
    const SelectionResult bon = bonferroni_from_tensor(cf.tensor, cfg);
    cfg.bootstrap_draws = 100000;
    const SelectionResult naive = naive_from_tensor(cf.tensor, cfg);
    for (std::size_t m = 0; m < 2; ++m) {
      const DeltaVector dv = delta_hat(cf.tensor, m);
      const double z = dv.delta[0] / std::sqrt(cov_hat(cf.tensor, m).sigma(0, 0));
      CHECK(bon.stats[m].statistic == doctest::Approx(z).epsilon(1e-12));
      CHECK(bon.stats[m].critical == doctest::Approx(stats::normal_quantile(0.9)).epsilon(1e-12));
      CHECK(naive.stats[m].statistic == bon.stats[m].statistic);
      CHECK(std::abs(naive.stats[m].critical - bon.stats[m].critical) < 0.05);
    }
  }

  SUBCASE("Bonferroni is conservative relative to naive and per-pair tests") {
    const CandidateSet c = make_candidates(s.truth, competitive_inferior_specs(), 14);
    const CrossFit cf = selector_cross_fit(s.data, c, cfg, NuisanceConfig{});
    cfg.bootstrap_draws = 50000;
    const SelectionResult bon = bonferroni_from_tensor(cf.tensor, cfg);
    const SelectionResult naive = naive_from_tensor(cf.tensor, cfg);
    const double per_pair = stats::normal_quantile(0.9);
    for (std::size_t m = 0; m < c.p(); ++m) {
      CHECK(bon.stats[m].critical >= naive.stats[m].critical - 0.02);
      if (bon.stats[m].statistic <= per_pair) CHECK(bon.accepts(m));
      if (naive.accepts(m)) CHECK(bon.accepts(m));
    }
    CHECK(bon.accepts(0));
    CHECK(std::is_sorted(bon.accepted.begin(), bon.accepted.end()));
  }
}

TEST_CASE("ablation equals proposed on a single-layer plan") {
  const ToySample s = generate_toy(600, {}, 15);
  const CandidateSet c = make_candidates(s.truth, similar_specs(), 16);
  SelectorConfig cfg;
  cfg.seed = 77;
  const SelectionResult abl = single_layer_ablation_select(s.data, c, cfg, oracle_of(s));
  const SplitPlan plan = single_layer_split(600, cfg.inner_folds, cfg.seed);
  const ScoreTensor t = build_score_tensor(s.data, c, oracle_of(s), plan.major);
  const Eigen::VectorXd ref = reference_z(t, plan, cfg.lambda_for(600));
  REQUIRE(abl.stats.size() == 5);
  CHECK(abl.selector == "ablation");
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(abl.stats[r].statistic == doctest::Approx(ref[static_cast<Eigen::Index>(r)]).epsilon(1e-10));
  }
}

TEST_CASE("selectors are deterministic and validate their config") {
  const ToySample s = generate_toy(500, {}, 17);
  const CandidateSet c = make_candidates(s.truth, similar_specs(), 18);
  SelectorConfig cfg;
  cfg.seed = 3;
  for (auto kind : {SelectorKind::Naive, SelectorKind::Bonferroni, SelectorKind::Proposed,
                    SelectorKind::Ablation}) {
    const SelectionResult a = run_selector(kind, s.data, c, cfg, NuisanceConfig{});
    const SelectionResult b = run_selector(kind, s.data, c, cfg, NuisanceConfig{});
    CHECK(a.accepted == b.accepted);
    for (std::size_t r = 0; r < a.stats.size(); ++r) {
      CHECK(a.stats[r].statistic == b.stats[r].statistic);
      CHECK(a.stats[r].critical == b.stats[r].critical);
    }
    CHECK(parse_selector(selector_name(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_selector("oracle"), ConfigError);

  SelectorConfig bad;
  bad.alpha = 1.0;
  CHECK_THROWS_AS(proposed_select(s.data, c, bad), ConfigError);
  bad = {};
  bad.lambda = -1.0;
  CHECK_THROWS_AS(proposed_select(s.data, c, bad), ConfigError);
  bad = {};
  bad.bootstrap_draws = 10;
  CHECK_THROWS_AS(naive_select(s.data, c, bad), ConfigError);
  CHECK(SelectorConfig{}.lambda_for(1000) == doctest::Approx(std::pow(1000.0, 0.4)));
}

TEST_CASE("identical candidates leave the proposed statistic undefined") {
  const ToySample s = generate_toy(200, {}, 19);
  const CandidateSet c(Eigen::MatrixXd(s.truth.tau.transpose().replicate(3, 1)));
  CHECK_THROWS_AS(proposed_select(s.data, c, {}), SelectionError);
  CHECK_THROWS_AS(naive_select(s.data, c, {}), SelectionError);
}
