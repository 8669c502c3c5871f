#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "resp/core.hpp"

namespace resp::aggregate {

/// Column standardization fitted on training data (population variance).
template <typename Scalar>
struct Scaler {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector means;
  Vector stds;                   // > 0; degenerate columns get 1
  std::vector<bool> degenerate;  // column had zero variance on the fit data
};

template <typename Derived>
Scaler<typename Derived::Scalar> fit_scaler(const Eigen::MatrixBase<Derived>& X) {
  using Scalar = typename Derived::Scalar;
  if (X.rows() == 0 || X.cols() == 0) throw Error(ErrorKind::Input, "EmptyMatrix", "fit_scaler");
  Scaler<Scalar> s;
  s.means = X.colwise().mean().transpose();
  s.stds = ((X.rowwise() - s.means.transpose()).colwise().squaredNorm() / static_cast<Scalar>(X.rows()))
               .cwiseSqrt()
               .transpose();
  s.degenerate.assign(static_cast<std::size_t>(X.cols()), false);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const Scalar scale = std::max(Scalar(1), s.means.cwiseAbs()(j));
    if (!(s.stds(j) > Scalar(1e-12) * scale)) {
      s.stds(j) = Scalar(1);
      s.degenerate[static_cast<std::size_t>(j)] = true;
    }
  }
  return s;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> apply_scaler(
    const Eigen::MatrixBase<Derived>& X, const Scaler<typename Derived::Scalar>& s) {
  if (X.cols() != s.means.size()) throw Error(ErrorKind::Input, "ShapeMismatch", "apply_scaler column count");
  return (X.rowwise() - s.means.transpose()).array().rowwise() / s.stds.transpose().array();
}

}  // namespace resp::aggregate
