#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "resp/aggregate/logistic.hpp"

namespace resp::aggregate {

/// Stratified fold ids in [0, k): each class is shuffled with a seeded counter RNG, then dealt
/// round-robin. Throws ClassTooSmall when a class has fewer than k members.
std::vector<int> stratified_folds(const Eigen::Ref<const Eigen::VectorXi>& y, int k, std::uint64_t seed);

/// One out-of-fold P(glitchy) per row. Each fold fits its own scaler and model on the training part.
Eigen::VectorXd cv_out_of_fold(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXi>& y,
                               int k, std::uint64_t seed, const LrOptions<double>& opt = {});

/// 2tp / (2tp + fp + fn); 0 when the denominator is 0.
double f1_from_counts(long tp, long fp, long fn);

/// F1 of the rule "positive iff prob > threshold".
double f1_at(const Eigen::Ref<const Eigen::VectorXd>& probs, const Eigen::Ref<const Eigen::VectorXi>& y, double threshold);

/// Candidate thresholds in ascending order: 0.5 plus the midpoints between consecutive distinct
/// values of {0} U probs U {1}.
std::vector<double> threshold_candidates(const Eigen::Ref<const Eigen::VectorXd>& probs);

struct ThresholdChoice {
  double threshold = 0.5;
  double f1 = 0.0;
};

/// F1-maximizing candidate; ties go to the smallest threshold.
ThresholdChoice select_threshold(const Eigen::Ref<const Eigen::VectorXd>& probs, const Eigen::Ref<const Eigen::VectorXi>& y);

}  // namespace resp::aggregate
