#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace htesel {

/// One unit record: covariates, binary treatment, observed outcome.
struct Observation {
  Eigen::VectorXd x;
  int t = 0;
  double y = 0.0;
};

/// Index-addressable collection of observations sharing one covariate
/// dimension. Always nonempty, with both treatment arms present.
class Dataset {
public:
  /// Throws DataError on shape mismatch, non-binary t, non-finite y, or a
  /// missing treatment arm.
  Dataset(Eigen::MatrixXd x, std::vector<int> t, Eigen::VectorXd y);

  std::size_t n() const { return t_.size(); }
  std::size_t d() const { return static_cast<std::size_t>(x_.cols()); }

  const Eigen::MatrixXd& x() const { return x_; }
  const std::vector<int>& t() const { return t_; }
  const Eigen::VectorXd& y() const { return y_; }

  Observation observation(std::size_t i) const;

  /// Copy with unit `i` replaced. The result must still contain both arms.
  Dataset with_replaced(std::size_t i, const Observation& obs) const;

  /// Rows `indices`, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

  std::size_t treated_count() const;

private:
  Eigen::MatrixXd x_;
  std::vector<int> t_;
  Eigen::VectorXd y_;
};

/// p candidate CATE predictors evaluated on the units of a dataset; entry
/// (r, i) is candidate r's prediction for unit i.
class CandidateSet {
public:
  explicit CandidateSet(Eigen::MatrixXd predictions);

  std::size_t p() const { return static_cast<std::size_t>(pred_.rows()); }
  std::size_t n() const { return static_cast<std::size_t>(pred_.cols()); }
  const Eigen::MatrixXd& predictions() const { return pred_; }
  double operator()(std::size_t r, std::size_t i) const {
    return pred_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
  }

  /// Candidates `rows` only (order preserved).
  CandidateSet select_rows(std::span<const std::size_t> rows) const;
  /// Units `cols` only.
  CandidateSet select_units(std::span<const std::size_t> cols) const;
  CandidateSet with_unit(std::size_t i, const Eigen::VectorXd& column) const;

private:
  Eigen::MatrixXd pred_;
};

}  // namespace htesel
