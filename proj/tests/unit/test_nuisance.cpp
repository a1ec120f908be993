#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "htesel/datagen.hpp"
#include "htesel/error.hpp"
#include "htesel/nuisance.hpp"
#include "htesel/rng.hpp"
#include "htesel/stats.hpp"

using namespace htesel;

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// OLS with intercept by QR on [1 | X]; independent of the ridge solver.
Eigen::VectorXd ols_with_intercept(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design.colPivHouseholderQr().solve(y);
}

double true_mu1(const ToyModel& m, const Eigen::VectorXd& x) {
  const int n_ca = m.dims().confounder + m.dims().adjustment;
  return x.segment(m.dims().instrument, n_ca).dot(m.treated_weights()) / n_ca;
}

}  // namespace

TEST_CASE("noiseless linear outcomes recover the OLS solution") {
  Rng rng = make_rng(1, 0);
  std::normal_distribution<double> g;
  const int n = 60;
  const int d = 4;
  Eigen::MatrixXd x(n, d);
  std::vector<int> t(n);
  Eigen::VectorXd y(n);
  const Eigen::Vector4d b0(0.5, -1.0, 2.0, 0.0);
  const Eigen::Vector4d b1(1.5, 0.25, -0.75, 3.0);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) x(i, k) = g(rng);
    t[static_cast<std::size_t>(i)] = i % 3 == 0 ? 1 : 0;
    y[i] = t[static_cast<std::size_t>(i)] ? 0.3 + x.row(i).dot(b1) : -0.2 + x.row(i).dot(b0);
  }
  const Dataset data(x, t, y);
  NuisanceConfig cfg;
  cfg.ridge_lambda = 0.0;
  const NuisanceModel m = fit_nuisance(data, cfg);

  for (int arm = 0; arm < 2; ++arm) {
    std::vector<Eigen::Index> rows;
    for (int i = 0; i < n; ++i) {
      if (t[static_cast<std::size_t>(i)] == arm) rows.push_back(i);
    }
    Eigen::MatrixXd xa(static_cast<Eigen::Index>(rows.size()), d);
    Eigen::VectorXd ya(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      xa.row(static_cast<Eigen::Index>(k)) = x.row(rows[k]);
      ya[static_cast<Eigen::Index>(k)] = y[rows[k]];
    }
    const Eigen::VectorXd beta = ols_with_intercept(xa, ya);
    const LinearFit& fit = arm == 1 ? m.mu1 : m.mu0;
    CHECK(std::abs(fit.intercept - beta[0]) < 1e-8);
    for (int k = 0; k < d; ++k) CHECK(std::abs(fit.coef[k] - beta[k + 1]) < 1e-8);
  }
}

TEST_CASE("y = 2x predicts 6 at x = 3") {
  Eigen::MatrixXd x(8, 1);
  x << 0, 1, 2, 3, 4, 5, 6, 7;
  Eigen::VectorXd y = 2.0 * x.col(0);
  const Dataset data(x, {0, 1, 0, 1, 0, 1, 0, 1}, y);
  NuisanceConfig cfg;
  cfg.ridge_lambda = 0.0;
  const NuisanceModel m = fit_nuisance(data, cfg);
  const auto p = predict(m, Eigen::VectorXd::Constant(1, 3.0));
  CHECK(std::abs(p.mu0 - 6.0) < 1e-10);
  CHECK(std::abs(p.mu1 - 6.0) < 1e-10);
}

TEST_CASE("zero-coefficient model and clipping") {
  NuisanceModel m;
  m.mu0 = {Eigen::VectorXd::Zero(2), 1.5};
  m.mu1 = {Eigen::VectorXd::Zero(2), -0.5};
  m.propensity_logit = {Eigen::VectorXd::Zero(2), 0.3};
  m.clip_eta = 0.05;
  const auto p = predict(m, Eigen::Vector2d(4.0, -7.0));
  CHECK(p.mu0 == 1.5);
  CHECK(p.mu1 == -0.5);
  CHECK(p.e == doctest::Approx(1.0 / (1.0 + std::exp(-0.3))).epsilon(1e-15));

  m.propensity_logit.intercept = std::log(0.999 / 0.001);
  CHECK(predict(m, Eigen::Vector2d(0, 0)).e == doctest::Approx(0.95).epsilon(1e-15));
  m.propensity_logit.intercept = -std::log(0.999 / 0.001);
  CHECK(predict(m, Eigen::Vector2d(0, 0)).e == doctest::Approx(0.05).epsilon(1e-15));

  CHECK_THROWS_AS(predict(m, Eigen::Vector3d(0, 0, 0)), DataError);
}

TEST_CASE("emitted propensities stay inside the clip band") {
  const ToySample s = generate_toy(2000, {}, 5);
  NuisanceConfig cfg;
  cfg.clip_eta = 0.2;
  const NuisanceValues v = predict_all(fit_nuisance(s.data, cfg), s.data);
  CHECK(v.e.minCoeff() >= 0.2);
  CHECK(v.e.maxCoeff() <= 0.8);
}

TEST_CASE("too few units of an arm is an error") {
  const ToySample s = generate_toy(200, {}, 5);
  std::vector<std::size_t> treated;
  std::vector<std::size_t> mixed;
  for (std::size_t i = 0; i < s.data.n(); ++i) {
    if (s.data.t()[i] == 1) treated.push_back(i);
  }
  CHECK_THROWS_AS(fit_nuisance(s.data, treated, {}), FitError);
  for (std::size_t i = 0; i < s.data.n() && mixed.size() < 12; ++i) mixed.push_back(i);
  CHECK_THROWS_AS(fit_nuisance(s.data, mixed, {}), FitError);
}

TEST_CASE("fits are deterministic") {
  const ToySample s = generate_toy(500, {}, 6);
  const NuisanceModel a = fit_nuisance(s.data, {});
  const NuisanceModel b = fit_nuisance(s.data, {});
  CHECK(a.mu0.coef == b.mu0.coef);
  CHECK(a.mu1.coef == b.mu1.coef);
  CHECK(a.propensity_logit.coef == b.propensity_logit.coef);
  CHECK(a.propensity_logit.intercept == b.propensity_logit.intercept);
}

TEST_CASE("outcome regression error halves when n quadruples") {
  Rng wrng = make_rng(42, 0);
  const ToyModel model = ToyModel::draw({}, wrng);
  Rng grng = make_rng(42, 1);
  const ToySample grid = model.sample(2000, grng);

  auto error_at = [&](std::size_t n) {
    double total = 0.0;
    const int reps = 20;
    for (int r = 0; r < reps; ++r) {
      Rng srng = make_rng(derive_seed(42, n), static_cast<std::uint64_t>(r));
      const ToySample s = model.sample(n, srng);
      const NuisanceModel m = fit_nuisance(s.data, {});
      double ss = 0.0;
      for (std::size_t i = 0; i < grid.data.n(); ++i) {
        const Eigen::VectorXd x = grid.data.x().row(static_cast<Eigen::Index>(i)).transpose();
        const double diff = predict(m, x).mu1 - true_mu1(model, x);
        ss += diff * diff;
      }
      total += std::sqrt(ss / static_cast<double>(grid.data.n()));
    }
    return total / reps;
  };
  const double ratio = error_at(1250) / error_at(5000);
  CAPTURE(ratio);
  CHECK(ratio > 1.0);
  CHECK(ratio < 3.0);
}

TEST_CASE("replace-one stability probe") {
  Rng wrng = make_rng(7, 0);
  const ToyModel model = ToyModel::draw({}, wrng);
  Rng grng = make_rng(7, 1);
  const Eigen::MatrixXd grid = model.sample(200, grng).data.x();

  SUBCASE("identical replacement gives zero") {
    Rng srng = make_rng(7, 2);
    const ToySample s = model.sample(300, srng);
    const auto idx = iota_indices(300);
    CHECK(stability_probe(s.data, idx, {}, 10, s.data.observation(10), grid) == 0.0);
    CHECK_THROWS_AS(stability_probe(s.data, std::vector<std::size_t>{0, 1}, {}, 5,
                                    s.data.observation(5), grid),
                    DataError);
  }

  auto first_at = [&](std::size_t n) {
    double total = 0.0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) {
      Rng srng = make_rng(derive_seed(7, n), static_cast<std::uint64_t>(r));
      const ToySample s = model.sample(n, srng);
      const ToyUnit fresh = model.draw_unit(srng);
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      total += stability_probe(s.data, iota_indices(n), {}, pick(srng), fresh.obs, grid);
    }
    return total / reps;
  };

  SUBCASE("first-order discrepancy scales as 1/n") {
    const double ratio = first_at(500) / first_at(1000);
    CAPTURE(ratio);
    CHECK(ratio > 2.0 * 0.4);
    CHECK(ratio < 2.0 * 1.6);
  }

  SUBCASE("second-order discrepancy decays faster") {
    std::vector<double> ln;
    std::vector<double> lv;
    for (std::size_t n : {250, 500, 1000, 2000}) {
      double total = 0.0;
      const int reps = 30;
      for (int r = 0; r < reps; ++r) {
        Rng srng = make_rng(derive_seed(8, n), static_cast<std::uint64_t>(r));
        const ToySample s = model.sample(n, srng);
        const ToyUnit a = model.draw_unit(srng);
        const ToyUnit b = model.draw_unit(srng);
        total += stability_probe_second(s.data, iota_indices(n), {}, 3, a.obs, n - 4, b.obs, grid);
      }
      ln.push_back(std::log(static_cast<double>(n)));
      lv.push_back(std::log(total / reps));
    }
    const double slope = stats::ols_slope(ln, lv);
    CAPTURE(slope);
    CHECK(slope <= -1.5);
  }
}
