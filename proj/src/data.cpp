#include "htesel/data.hpp"

#include <cmath>
#include <string>

#include "htesel/error.hpp"

namespace htesel {

namespace {

void check_arms(const std::vector<int>& t) {
  bool treated = false;
  bool control = false;
  for (int v : t) {
    treated = treated || v == 1;
    control = control || v == 0;
  }
  if (!treated || !control) {
    throw DataError("dataset must contain both treatment arms");
  }
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd x, std::vector<int> t, Eigen::VectorXd y)
    : x_(std::move(x)), t_(std::move(t)), y_(std::move(y)) {
  if (t_.empty()) throw DataError("dataset is empty");
  if (static_cast<std::size_t>(x_.rows()) != t_.size() ||
      static_cast<std::size_t>(y_.size()) != t_.size()) {
    throw DataError("dataset columns have inconsistent lengths");
  }
  for (std::size_t i = 0; i < t_.size(); ++i) {
    if (t_[i] != 0 && t_[i] != 1) {
      throw DataError("treatment of unit " + std::to_string(i) + " is not binary");
    }
    if (!std::isfinite(y_[static_cast<Eigen::Index>(i)])) {
      throw DataError("outcome of unit " + std::to_string(i) + " is not finite");
    }
  }
  if (!x_.allFinite()) throw DataError("covariates contain non-finite values");
  check_arms(t_);
}

Observation Dataset::observation(std::size_t i) const {
  const auto row = static_cast<Eigen::Index>(i);
  return {x_.row(row).transpose(), t_.at(i), y_[row]};
}

Dataset Dataset::with_replaced(std::size_t i, const Observation& obs) const {
  if (i >= n()) throw DataError("replacement index out of range");
  if (static_cast<std::size_t>(obs.x.size()) != d()) {
    throw DataError("replacement observation has wrong dimension");
  }
  Eigen::MatrixXd x = x_;
  std::vector<int> t = t_;
  Eigen::VectorXd y = y_;
  x.row(static_cast<Eigen::Index>(i)) = obs.x.transpose();
  t[i] = obs.t;
  y[static_cast<Eigen::Index>(i)] = obs.y;
  return Dataset(std::move(x), std::move(t), std::move(y));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(indices.size()), x_.cols());
  std::vector<int> t(indices.size());
  Eigen::VectorXd y(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto src = static_cast<Eigen::Index>(indices[k]);
    const auto dst = static_cast<Eigen::Index>(k);
    x.row(dst) = x_.row(src);
    t[k] = t_.at(indices[k]);
    y[dst] = y_[src];
  }
  return Dataset(std::move(x), std::move(t), std::move(y));
}

std::size_t Dataset::treated_count() const {
  std::size_t c = 0;
  for (int v : t_) c += static_cast<std::size_t>(v);
  return c;
}

CandidateSet::CandidateSet(Eigen::MatrixXd predictions) : pred_(std::move(predictions)) {
  if (pred_.rows() < 2) throw DataError("candidate set needs at least two candidates");
  if (pred_.cols() < 1) throw DataError("candidate set has no units");
  for (Eigen::Index r = 0; r < pred_.rows(); ++r) {
    if (!pred_.row(r).allFinite()) {
      throw DataError("candidate " + std::to_string(r) + " has non-finite predictions");
    }
  }
}

CandidateSet CandidateSet::select_rows(std::span<const std::size_t> rows) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), pred_.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = pred_.row(static_cast<Eigen::Index>(rows[k]));
  }
  return CandidateSet(std::move(out));
}

CandidateSet CandidateSet::select_units(std::span<const std::size_t> cols) const {
  Eigen::MatrixXd out(pred_.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = pred_.col(static_cast<Eigen::Index>(cols[k]));
  }
  return CandidateSet(std::move(out));
}

CandidateSet CandidateSet::with_unit(std::size_t i, const Eigen::VectorXd& column) const {
  Eigen::MatrixXd out = pred_;
  out.col(static_cast<Eigen::Index>(i)) = column;
  return CandidateSet(std::move(out));
}

}  // namespace htesel
