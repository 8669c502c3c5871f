#pragma once

// L2-regularized binary logistic regression:
//
//   f(w, b) = 1/2 |w|^2 + C * sum_i log(1 + exp(-s_i (w.x_i + b))),  s_i in {-1, +1}
//
// The intercept b is not regularized. Parameters are stacked as theta = [w; b].
// The solver is a trust-region Newton method with a Steihaug conjugate-gradient inner
// loop; only accepted steps change theta, so the objective never increases.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "resp/core.hpp"

namespace resp::aggregate {

template <typename Scalar>
struct LrOptions {
  Scalar C = Scalar(3.0);
  int max_iter = 500;
  Scalar tol = Scalar(1e-6);  // on the max-norm of the gradient
};

template <typename Scalar>
struct LrFit {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector weights;
  Scalar intercept = 0;
  int iterations = 0;
  bool converged = false;
  Scalar gradient_max_norm = 0;
  std::vector<Scalar> objective_trace;  // initial value, then one entry per accepted step
};

/// log(1 + exp(-m)) without overflow.
template <typename Scalar>
Scalar log1p_exp_neg(Scalar m) {
  return m >= 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

namespace detail {

template <typename Scalar>
class LogisticObjective {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  template <typename DerivedX>
  LogisticObjective(const Eigen::MatrixBase<DerivedX>& X, const Eigen::Ref<const Eigen::VectorXi>& y, Scalar C)
      : Xa_(X.rows(), X.cols() + 1), s_(y.size()), C_(C) {
    if (X.rows() != y.size()) throw Error(ErrorKind::Input, "ShapeMismatch", "X rows != y size");
    Xa_.leftCols(X.cols()) = X;
    Xa_.col(X.cols()).setOnes();
    for (Eigen::Index i = 0; i < y.size(); ++i) s_(i) = y(i) ? Scalar(1) : Scalar(-1);
  }

  Eigen::Index dim() const { return Xa_.cols(); }

  Scalar value(const Vector& theta) const {
    const Vector margins = s_.cwiseProduct(Xa_ * theta);
    Scalar loss = 0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) loss += log1p_exp_neg(margins(i));
    const auto d = dim() - 1;
    return Scalar(0.5) * theta.head(d).squaredNorm() + C_ * loss;
  }

  /// value(theta) - value(theta + step), accumulated per sample so that small reductions
  /// near the optimum do not vanish in the cancellation of two large totals.
  Scalar reduction(const Vector& theta, const Vector& step) const {
    const Vector margins = s_.cwiseProduct(Xa_ * theta);
    const Vector delta = s_.cwiseProduct(Xa_ * step);
    Scalar loss = 0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
      const Scalar next = margins(i) + delta(i);
      if (std::abs(delta(i)) < Scalar(30))
        loss += std::log1p(sigmoid(-next) * std::expm1(delta(i)));
      else
        loss += log1p_exp_neg(margins(i)) - log1p_exp_neg(next);
    }
    const auto d = dim() - 1;
    const Scalar reg = -(theta.head(d).dot(step.head(d)) + Scalar(0.5) * step.head(d).squaredNorm());
    return reg + C_ * loss;
  }

  Vector gradient(const Vector& theta) const {
    const Vector margins = s_.cwiseProduct(Xa_ * theta);
    Vector coef(margins.size());
    for (Eigen::Index i = 0; i < margins.size(); ++i) coef(i) = -C_ * s_(i) * sigmoid(-margins(i));
    Vector g = Xa_.transpose() * coef;
    const auto d = dim() - 1;
    g.head(d) += theta.head(d);
    return g;
  }

  Matrix hessian(const Vector& theta) const {
    const Vector z = Xa_ * theta;
    Vector dvec(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const Scalar p = sigmoid(z(i));
      dvec(i) = C_ * p * (Scalar(1) - p);
    }
    Matrix H = Xa_.transpose() * dvec.asDiagonal() * Xa_;
    const auto d = dim() - 1;
    H.diagonal().head(d).array() += Scalar(1);
    return H;
  }

 private:
  Matrix Xa_;
  Vector s_;
  Scalar C_;
};

/// Steihaug-CG for min g.s + 1/2 s'Hs subject to |s| <= delta.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> trust_region_step(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& H,
                                                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& g, Scalar delta) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector s = Vector::Zero(g.size());
  Vector r = -g;
  Vector d = r;
  Scalar rr = r.squaredNorm();
  const Scalar cg_tol = Scalar(0.1) * g.norm();

  auto to_boundary = [&](const Vector& dir) {
    // tau >= 0 with |s + tau dir| = delta
    const Scalar sd = s.dot(dir), dd = dir.squaredNorm(), ss = s.squaredNorm();
    const Scalar rad = std::sqrt(std::max(Scalar(0), sd * sd + dd * (delta * delta - ss)));
    const Scalar tau = sd >= 0 ? (delta * delta - ss) / (sd + rad) : (rad - sd) / dd;
    return Vector(s + tau * dir);
  };

  const int max_cg = 10 * static_cast<int>(g.size()) + 10;
  for (int it = 0; it < max_cg; ++it) {
    if (std::sqrt(rr) <= cg_tol) break;
    const Vector Hd = H * d;
    const Scalar dHd = d.dot(Hd);
    if (!(dHd > 0)) return to_boundary(d);
    const Scalar alpha = rr / dHd;
    const Vector next = s + alpha * d;
    if (next.norm() >= delta) return to_boundary(d);
    s = next;
    r -= alpha * Hd;
    const Scalar rr_new = r.squaredNorm();
    d = r + (rr_new / rr) * d;
    rr = rr_new;
  }
  return s;
}

}  // namespace detail

template <typename DerivedX, typename DerivedT>
typename DerivedX::Scalar lr_objective(const Eigen::MatrixBase<DerivedX>& X, const Eigen::Ref<const Eigen::VectorXi>& y,
                                       const Eigen::MatrixBase<DerivedT>& theta, typename DerivedX::Scalar C) {
  return detail::LogisticObjective<typename DerivedX::Scalar>(X, y, C).value(theta);
}

template <typename DerivedX, typename DerivedT>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1> lr_gradient(const Eigen::MatrixBase<DerivedX>& X,
                                                                        const Eigen::Ref<const Eigen::VectorXi>& y,
                                                                        const Eigen::MatrixBase<DerivedT>& theta,
                                                                        typename DerivedX::Scalar C) {
  return detail::LogisticObjective<typename DerivedX::Scalar>(X, y, C).gradient(theta);
}

/// Fits on standardized features X (n x d) and 0/1 labels y (1 = glitchy).
/// Throws SingleClass when y holds one class only, NonFinite on non-finite inputs or results.
template <typename DerivedX>
LrFit<typename DerivedX::Scalar> train_lr(const Eigen::MatrixBase<DerivedX>& X, const Eigen::Ref<const Eigen::VectorXi>& y,
                                          const LrOptions<typename DerivedX::Scalar>& opt = {}) {
  using Scalar = typename DerivedX::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  if (!X.allFinite()) throw Error(ErrorKind::Input, "NonFinite", "train_lr features");
  const auto positives = (y.array() != 0).count();
  if (positives == 0 || positives == y.size())
    throw Error(ErrorKind::Input, "SingleClass", "train_lr needs both classes");
  if (!(opt.C > 0)) throw Error(ErrorKind::Config, "InvalidConfig", "C must be positive");

  detail::LogisticObjective<Scalar> obj(X, y, opt.C);
  Vector theta = Vector::Zero(obj.dim());
  Scalar f = obj.value(theta);
  Vector g = obj.gradient(theta);
  Scalar delta = g.norm();

  constexpr Scalar eta0 = 1e-4, eta1 = 0.25, eta2 = 0.75;
  constexpr Scalar sigma1 = 0.25, sigma2 = 0.5, sigma3 = 4.0;

  LrFit<Scalar> fit;
  fit.objective_trace.push_back(f);
  int iter = 0;
  bool converged = g.template lpNorm<Eigen::Infinity>() <= opt.tol;
  while (!converged && iter < opt.max_iter) {
    ++iter;
    const auto H = obj.hessian(theta);
    const Vector step = detail::trust_region_step<Scalar>(H, g, delta);
    const Scalar gs = g.dot(step);
    const Scalar predicted = -(gs + Scalar(0.5) * step.dot(H * step));
    const Vector candidate = theta + step;
    const Scalar actual = obj.reduction(theta, step);
    const Scalar snorm = step.norm();
    if (iter == 1) delta = std::min(delta, snorm);

    const Scalar curvature = -actual - gs;
    const Scalar alpha = curvature <= 0 ? sigma3 : std::max(sigma1, Scalar(-0.5) * (gs / curvature));
    if (actual < eta0 * predicted)
      delta = std::min(std::max(alpha, sigma1) * snorm, sigma2 * delta);
    else if (actual < eta1 * predicted)
      delta = std::max(sigma1 * delta, std::min(alpha * snorm, sigma2 * delta));
    else if (actual < eta2 * predicted)
      delta = std::max(sigma1 * delta, std::min(alpha * snorm, sigma3 * delta));
    else
      delta = std::max(delta, std::min(alpha * snorm, sigma3 * delta));

    if (actual > eta0 * predicted && actual > 0) {
      theta = candidate;
      f -= actual;
      g = obj.gradient(theta);
      fit.objective_trace.push_back(f);
    }
    converged = g.template lpNorm<Eigen::Infinity>() <= opt.tol;
    if (!converged && delta <= std::numeric_limits<Scalar>::epsilon() * (Scalar(1) + theta.norm())) break;
  }

  if (!theta.allFinite()) throw Error(ErrorKind::Invariant, "NonFinite", "train_lr solution");
  const auto d = X.cols();
  fit.weights = theta.head(d);
  fit.intercept = theta(d);
  fit.iterations = iter;
  fit.converged = converged;
  fit.gradient_max_norm = g.template lpNorm<Eigen::Infinity>();
  return fit;
}

/// P(glitchy) per row.
template <typename DerivedX>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1> predict_proba(
    const Eigen::MatrixBase<DerivedX>& X, const Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1>& w,
    typename DerivedX::Scalar b) {
  using Scalar = typename DerivedX::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z = X * w;
  return z.unaryExpr([b](Scalar v) { return sigmoid(v + b); });
}

}  // namespace resp::aggregate
