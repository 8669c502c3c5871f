#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resp/core.hpp"

namespace resp::aggregate {

inline constexpr std::array<int, 4> kWindowSizes{5, 10, 15, 20};

/// Run/window statistics of a predicted frame-label sequence.
struct SequenceStats {
  int T = 0;
  int glitch_count = 0;
  double frac = 0.0;
  int max_run = 0;
  std::map<int, int> max_win;  // W -> max glitchy frames in any window of min(W, T)
  int run_count = 0;
  double run_density = 0.0;

  bool operator==(const SequenceStats&) const = default;
};

/// Throws EmptySequence for T = 0.
SequenceStats compute_stats(std::span<const FrameLabel> labels);

/// Candidate statistics considered by the correlation filter, in canonical order.
const std::vector<std::string>& candidate_stat_names();
Eigen::VectorXd candidate_stat_row(const SequenceStats& s);

/// The model's inputs: T, frac, max_run, max_win_5, run_density.
inline constexpr int kFeatureCount = 5;
using FeatureVector = Eigen::Matrix<double, kFeatureCount, 1>;
const std::vector<std::string>& feature_names();
FeatureVector features(const SequenceStats& s);
inline FeatureVector features(std::span<const FrameLabel> labels) { return features(compute_stats(labels)); }

struct CorrelationFilterResult {
  std::vector<std::string> selected;
  std::vector<std::string> dropped;
  std::vector<std::string> constant;  // treated as uncorrelated (warning)
  Eigen::MatrixXd correlation;        // Pearson r over the candidate stats
};

/// Pearson correlations among candidate stats; for each pair with |r| > threshold, the later
/// feature in canonical order is dropped (greedy, earlier pairs first). Needs >= 3 rows.
CorrelationFilterResult correlation_filter(const std::vector<SequenceStats>& rows, double threshold = 0.9);

}  // namespace resp::aggregate
