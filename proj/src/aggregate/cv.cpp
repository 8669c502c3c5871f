#include "resp/aggregate/cv.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "resp/aggregate/scaler.hpp"
#include "resp/rng.hpp"

namespace resp::aggregate {

std::vector<int> stratified_folds(const Eigen::Ref<const Eigen::VectorXi>& y, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::Config, "InvalidConfig", "k_folds must be >= 2");
  std::vector<int> fold(static_cast<std::size_t>(y.size()), -1);
  for (int cls : {0, 1}) {
    std::vector<int> members;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if ((y(i) != 0) == (cls == 1)) members.push_back(static_cast<int>(i));
    if (static_cast<int>(members.size()) < k)
      throw Error(ErrorKind::Input, "ClassTooSmall",
                  "class " + std::to_string(cls) + " has " + std::to_string(members.size()) + " samples, need >= " +
                      std::to_string(k));
    rng::CounterRng gen(rng::derive_key(seed, {0x666f6c6473ULL, static_cast<std::uint64_t>(cls)}));
    rng::shuffle(members.begin(), members.end(), gen);
    for (std::size_t p = 0; p < members.size(); ++p) fold[static_cast<std::size_t>(members[p])] = static_cast<int>(p % k);
  }
  return fold;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::Ref<const Eigen::MatrixXd>& X, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  return out;
}

Eigen::VectorXi take(const Eigen::Ref<const Eigen::VectorXi>& y, const std::vector<int>& rows) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(rows[i]);
  return out;
}

}  // namespace

Eigen::VectorXd cv_out_of_fold(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXi>& y,
                               int k, std::uint64_t seed, const LrOptions<double>& opt) {
  if (X.rows() != y.size()) throw Error(ErrorKind::Input, "ShapeMismatch", "X rows != y size");
  const auto fold = stratified_folds(y, k, seed);
  Eigen::VectorXd oof = Eigen::VectorXd::Constant(y.size(), -1.0);
  for (int f = 0; f < k; ++f) {
    std::vector<int> train, valid;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? valid : train).push_back(static_cast<int>(i));
    const Eigen::MatrixXd Xtr = take_rows(X, train);
    const auto scaler = fit_scaler(Xtr);
    const auto fit = train_lr(apply_scaler(Xtr, scaler), take(y, train), opt);
    const Eigen::VectorXd p = predict_proba(apply_scaler(take_rows(X, valid), scaler), fit.weights, fit.intercept);
    for (std::size_t i = 0; i < valid.size(); ++i) oof(valid[i]) = p(static_cast<Eigen::Index>(i));
  }
  return oof;
}

double f1_from_counts(long tp, long fp, long fn) {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double f1_at(const Eigen::Ref<const Eigen::VectorXd>& probs, const Eigen::Ref<const Eigen::VectorXi>& y, double threshold) {
  long tp = 0, fp = 0, fn = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const bool pred = probs(i) > threshold, truth = y(i) != 0;
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  return f1_from_counts(tp, fp, fn);
}

std::vector<double> threshold_candidates(const Eigen::Ref<const Eigen::VectorXd>& probs) {
  std::vector<double> v(probs.data(), probs.data() + probs.size());
  v.push_back(0.0);
  v.push_back(1.0);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> out{0.5};
  for (std::size_t i = 0; i + 1 < v.size(); ++i) out.push_back(v[i] + (v[i + 1] - v[i]) / 2);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ThresholdChoice select_threshold(const Eigen::Ref<const Eigen::VectorXd>& probs, const Eigen::Ref<const Eigen::VectorXi>& y) {
  if (probs.size() != y.size()) throw Error(ErrorKind::Input, "LengthMismatch", "probs and labels differ in length");
  const auto candidates = threshold_candidates(probs);

  // Sweep candidates upward over probabilities sorted ascending; items at or below the
  // threshold are predicted negative.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(probs.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return probs(a) < probs(b); });
  long positives = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) positives += y(i) != 0;

  long tp = positives, fp = static_cast<long>(y.size()) - positives;
  std::size_t cursor = 0;
  ThresholdChoice best{candidates.front(), -1.0};
  long best_num = 0, best_den = 1;  // exact F1 comparison as 2tp / (2tp + fp + fn)
  for (double c : candidates) {
    while (cursor < order.size() && probs(order[cursor]) <= c) {
      if (y(order[cursor]) != 0) --tp; else --fp;
      ++cursor;
    }
    const long fn = positives - tp;
    const long num = 2 * tp, den = std::max(1L, 2 * tp + fp + fn);
    if (best.f1 < 0 || num * best_den > best_num * den) {
      best = {c, f1_from_counts(tp, fp, fn)};
      best_num = num;
      best_den = den;
    }
  }
  return best;
}

}  // namespace resp::aggregate
