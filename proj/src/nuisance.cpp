#include "htesel/nuisance.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "htesel/error.hpp"
#include "htesel/rng.hpp"

namespace htesel {

namespace {

constexpr double kMinRcond = 1e-13;

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

double logistic_objective(const Eigen::MatrixXd& design, const Eigen::VectorXd& tv,
                          const Eigen::VectorXd& beta, double l2) {
  const Eigen::VectorXd z = design * beta;
  double f = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) f += softplus(z[i]) - tv[i] * z[i];
  return f + 0.5 * l2 * beta.tail(beta.size() - 1).squaredNorm();
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(idx[k]));
  }
  return out;
}

}  // namespace

void NuisanceConfig::validate() const {
  if (!(clip_eta > 0.0 && clip_eta < 0.5)) throw ConfigError("clip_eta must lie in (0, 0.5)");
  if (!(tol > 0.0)) throw ConfigError("nuisance tol must be > 0");
  if (max_iter < 1) throw ConfigError("nuisance max_iter must be >= 1");
  if (ridge_lambda && !(*ridge_lambda >= 0.0)) throw ConfigError("ridge_lambda must be >= 0");
  if (logistic_l2 && !(*logistic_l2 >= 0.0)) throw ConfigError("logistic_l2 must be >= 0");
}

std::uint64_t fingerprint_indices(std::span<const std::size_t> indices) {
  std::vector<std::size_t> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t h = derive_seed(sorted.size(), 0);
  for (std::size_t i : sorted) h = derive_seed(h, i);
  return h;
}

LinearFit fit_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < kMinRcond) {
    throw FitError("ridge system is singular or ill-conditioned");
  }
  LinearFit fit;
  fit.coef = llt.solve(xc.transpose() * yc);
  fit.intercept = y_mean - x_mean.dot(fit.coef);
  if (!fit.coef.allFinite() || !std::isfinite(fit.intercept)) {
    throw FitError("ridge solution is not finite");
  }
  return fit;
}

LinearFit fit_logistic(const Eigen::MatrixXd& x, const std::vector<int>& t, double l2, int max_iter,
                       double tol) {
  const Eigen::Index m = x.rows();
  const Eigen::Index k = x.cols() + 1;
  Eigen::MatrixXd design(m, k);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  Eigen::VectorXd tv(m);
  for (Eigen::Index i = 0; i < m; ++i) tv[i] = t[static_cast<std::size_t>(i)];

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double f = logistic_objective(design, tv, beta, l2);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::VectorXd z = design * beta;
    Eigen::VectorXd prob(m);
    Eigen::VectorXd w(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      prob[i] = sigmoid(z[i]);
      w[i] = prob[i] * (1.0 - prob[i]);
    }
    Eigen::VectorXd grad = design.transpose() * (prob - tv);
    grad.tail(k - 1) += l2 * beta.tail(k - 1);
    Eigen::MatrixXd hess = design.transpose() * w.asDiagonal() * design;
    hess.diagonal().tail(k - 1).array() += l2;

    const Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < kMinRcond) {
      throw FitError("logistic Hessian is singular or ill-conditioned");
    }
    const Eigen::VectorXd step = ldlt.solve(grad);

    // Halve until the penalized objective does not increase.
    double scale = 1.0;
    Eigen::VectorXd next = beta - step;
    double f_next = logistic_objective(design, tv, next, l2);
    while (f_next > f + 1e-12 * std::abs(f) && scale > 1e-10) {
      scale *= 0.5;
      next = beta - scale * step;
      f_next = logistic_objective(design, tv, next, l2);
    }
    beta = next;
    f = f_next;
    if ((scale * step).lpNorm<Eigen::Infinity>() < tol) {
      if (!beta.allFinite()) throw FitError("logistic solution is not finite");
      return {beta.tail(k - 1), beta[0]};
    }
  }
  throw FitError(fmt::format("logistic regression did not converge in {} iterations", max_iter));
}

NuisanceModel fit_nuisance(const Dataset& data, std::span<const std::size_t> indices,
                           const NuisanceConfig& config) {
  config.validate();
  std::vector<std::size_t> arm0;
  std::vector<std::size_t> arm1;
  for (std::size_t i : indices) {
    if (i >= data.n()) throw DataError("nuisance training index out of range");
    (data.t()[i] == 1 ? arm1 : arm0).push_back(i);
  }
  const std::size_t need = data.d() + 2;
  if (arm0.size() < need || arm1.size() < need) {
    throw FitError(fmt::format(
        "training set has {} control and {} treated units; need at least {} per arm", arm0.size(),
        arm1.size(), need));
  }
  const auto m = static_cast<double>(indices.size());
  const double ridge = config.ridge_lambda.value_or(1e-3 * m);
  const double l2 = config.logistic_l2.value_or(1e-3 * m);

  auto arm_fit = [&](const std::vector<std::size_t>& arm) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(arm.size()));
    for (std::size_t k = 0; k < arm.size(); ++k) {
      y[static_cast<Eigen::Index>(k)] = data.y()[static_cast<Eigen::Index>(arm[k])];
    }
    return fit_ridge(gather_rows(data.x(), arm), y, ridge);
  };

  NuisanceModel model;
  model.mu0 = arm_fit(arm0);
  model.mu1 = arm_fit(arm1);
  std::vector<int> t(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) t[k] = data.t()[indices[k]];
  model.propensity_logit =
      fit_logistic(gather_rows(data.x(), indices), t, l2, config.max_iter, config.tol);
  model.clip_eta = config.clip_eta;
  model.train_size = indices.size();
  model.train_fingerprint = fingerprint_indices(indices);
  return model;
}

NuisanceModel fit_nuisance(const Dataset& data, const NuisanceConfig& config) {
  std::vector<std::size_t> all(data.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return fit_nuisance(data, all, config);
}

NuisancePrediction predict(const NuisanceModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (static_cast<std::size_t>(x.size()) != model.dim()) {
    throw DataError(fmt::format("covariate dimension {} does not match model dimension {}",
                                x.size(), model.dim()));
  }
  const double e = std::clamp(sigmoid(model.propensity_logit(x)), model.clip_eta,
                              1.0 - model.clip_eta);
  return {model.mu0(x), model.mu1(x), e};
}

void predict_into(const NuisanceModel& model, const Dataset& data,
                  std::span<const std::size_t> indices, NuisanceValues& out) {
  for (std::size_t i : indices) {
    const auto row = static_cast<Eigen::Index>(i);
    const NuisancePrediction p = predict(model, data.x().row(row).transpose());
    out.mu0[row] = p.mu0;
    out.mu1[row] = p.mu1;
    out.e[row] = p.e;
  }
}

NuisanceValues predict_all(const NuisanceModel& model, const Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.n());
  NuisanceValues out{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  std::vector<std::size_t> all(data.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  predict_into(model, data, all, out);
  return out;
}

namespace {

Eigen::MatrixXd outcome_grid_predictions(const NuisanceModel& model, const Eigen::MatrixXd& grid) {
  Eigen::MatrixXd out(grid.rows(), 2);
  for (Eigen::Index g = 0; g < grid.rows(); ++g) {
    out(g, 0) = model.mu0(grid.row(g).transpose());
    out(g, 1) = model.mu1(grid.row(g).transpose());
  }
  return out;
}

double rms(const Eigen::MatrixXd& diff) {
  return std::sqrt(diff.squaredNorm() / static_cast<double>(diff.rows()));
}

}  // namespace

double stability_probe(const Dataset& data, std::span<const std::size_t> indices,
                       const NuisanceConfig& config, std::size_t r, const Observation& replacement,
                       const Eigen::MatrixXd& grid) {
  if (std::find(indices.begin(), indices.end(), r) == indices.end()) {
    throw DataError("stability_probe: replaced unit is not in the training set");
  }
  const auto base = outcome_grid_predictions(fit_nuisance(data, indices, config), grid);
  const Dataset swapped = data.with_replaced(r, replacement);
  const auto moved = outcome_grid_predictions(fit_nuisance(swapped, indices, config), grid);
  return rms(base - moved);
}

double stability_probe_second(const Dataset& data, std::span<const std::size_t> indices,
                              const NuisanceConfig& config, std::size_t r,
                              const Observation& replacement_r, std::size_t t,
                              const Observation& replacement_t, const Eigen::MatrixXd& grid) {
  for (std::size_t u : {r, t}) {
    if (std::find(indices.begin(), indices.end(), u) == indices.end()) {
      throw DataError("stability_probe_second: replaced unit is not in the training set");
    }
  }
  if (r == t) throw DataError("stability_probe_second: r and t must differ");
  const Dataset dr = data.with_replaced(r, replacement_r);
  const Dataset dt = data.with_replaced(t, replacement_t);
  const Dataset drt = dr.with_replaced(t, replacement_t);
  auto f = [&](const Dataset& d) {
    return outcome_grid_predictions(fit_nuisance(d, indices, config), grid);
  };
  return rms(f(data) - f(dr) - f(dt) + f(drt));
}

}  // namespace htesel
