#include <doctest.h>

#include <cmath>

#include "htesel/datagen.hpp"
#include "htesel/error.hpp"

using namespace htesel;

TEST_CASE("toy propensities are clipped and truth is consistent") {
  const ToySample s = generate_toy(1000, {2, 2, 2, 2}, 7);
  CHECK(s.data.n() == 1000);
  CHECK(s.data.d() == 8);
  CHECK(s.truth.e.minCoeff() >= 0.1);
  CHECK(s.truth.e.maxCoeff() <= 0.9);
  // Clipping is active on both sides for this draw.
  CHECK(s.truth.e.minCoeff() == 0.1);
  CHECK(s.truth.e.maxCoeff() == 0.9);
  for (Eigen::Index i = 0; i < s.truth.tau.size(); ++i) {
    CHECK(s.truth.tau[i] == s.truth.mu1[i] - s.truth.mu0[i]);
    const int t = s.data.t()[static_cast<std::size_t>(i)];
    CHECK(s.data.y()[i] == (t == 1 ? s.truth.mu1[i] : s.truth.mu0[i]));
  }
}

TEST_CASE("toy generation is deterministic in the seed") {
  const ToySample a = generate_toy(500, {}, 11);
  const ToySample b = generate_toy(500, {}, 11);
  const ToySample c = generate_toy(500, {}, 12);
  CHECK(a.data.x() == b.data.x());
  CHECK(a.data.t() == b.data.t());
  CHECK(a.data.y() == b.data.y());
  CHECK(a.truth.tau == b.truth.tau);
  CHECK_FALSE(a.data.y() == c.data.y());
}

TEST_CASE("mean treatment effect is zero for centered covariates") {
  const ToySample s = generate_toy(100000, {}, 3);
  const double n = static_cast<double>(s.truth.tau.size());
  const double mean = s.truth.tau.mean();
  const double sd = std::sqrt((s.truth.tau.array() - mean).square().sum() / (n - 1.0));
  CHECK(std::abs(mean) < 4.0 * sd / std::sqrt(n));
}

TEST_CASE("toy generator preconditions") {
  CHECK_THROWS_AS(generate_toy(19, {}, 1), ConfigError);
  CHECK_THROWS_AS(generate_toy(100, {0, 2, 2, 2}, 1), ConfigError);
  CHECK(generate_toy(20, {1, 1, 1, 1}, 1).data.d() == 4);
}

TEST_CASE("zero-noise candidate reproduces tau") {
  const ToySample s = generate_toy(200, {}, 1);
  const CandidateSet c = make_candidates(s.truth, {{0.0, 0.0}, {0.25, 0.0}}, 9);
  for (Eigen::Index i = 0; i < s.truth.tau.size(); ++i) {
    CHECK(c(0, static_cast<std::size_t>(i)) == s.truth.tau[i]);
    CHECK(c(1, static_cast<std::size_t>(i)) == s.truth.tau[i] + 0.25);
  }
}

TEST_CASE("candidate MSE matches mean^2 + sd^2") {
  const ToySample s = generate_toy(100000, {}, 4);
  const auto specs = competitive_inferior_specs();
  const CandidateSet c = make_candidates(s.truth, specs, 21);
  for (std::size_t r = 0; r < specs.size(); ++r) {
    const Eigen::VectorXd err = c.predictions().row(static_cast<Eigen::Index>(r)).transpose() - s.truth.tau;
    const double mse = err.squaredNorm() / static_cast<double>(err.size());
    CAPTURE(r);
    CHECK(mse == doctest::Approx(specs[r].mse()).epsilon(0.05));
  }
}

TEST_CASE("candidate rows depend only on their own spec and seed") {
  const ToySample s = generate_toy(300, {}, 5);
  const auto full = competitive_inferior_specs();
  const std::vector<NoiseSpec> prefix(full.begin(), full.begin() + 3);
  const CandidateSet a = make_candidates(s.truth, full, 8);
  const CandidateSet b = make_candidates(s.truth, prefix, 8);
  CHECK(a.predictions().topRows(3) == b.predictions());
}

TEST_CASE("noise presets and winner") {
  const auto sim = similar_specs();
  REQUIRE(sim.size() == 5);
  CHECK(sim[0].mean == 0.0);
  for (std::size_t r = 1; r < sim.size(); ++r) CHECK(sim[r].mean == 0.03);
  for (const auto& s : sim) CHECK(s.sd == 0.1);
  CHECK(winner_index(sim) == 0);
  CHECK(winner_index(competitive_inferior_specs()) == 0);
  CHECK(winner_index({{0.3, 0.1}, {0.0, 0.1}}) == 1);
  CHECK_THROWS_AS(winner_index({{0.0, 0.1}, {0.0, 0.1}}), ConfigError);
  CHECK(population_delta({0.0, 0.1}, {0.03, 0.1}) == doctest::Approx(-0.0009).epsilon(1e-12));
}

TEST_CASE("negative sd is rejected") {
  const ToySample s = generate_toy(50, {}, 1);
  CHECK_THROWS_AS(make_candidates(s.truth, {{0.0, -0.1}, {0.0, 0.1}}, 1), ConfigError);
  CHECK_THROWS_AS(make_candidates(s.truth, {}, 1), ConfigError);
}
