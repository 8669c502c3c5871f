#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resp/aggregate/cv.hpp"
#include "resp/aggregate/scaler.hpp"
#include "resp/aggregate/stats.hpp"
#include "resp/core.hpp"

namespace resp::aggregate {

inline constexpr int kModelFormatVersion = 1;

struct TrainParams {
  double C = 3.0;
  int max_iter = 500;
  double tol = 1e-6;
  int k_folds = 5;
  std::uint64_t seed = 0;

  bool operator==(const TrainParams&) const = default;
};

/// Scaler + logistic regression + decision threshold.
struct AggregatorModel {
  std::vector<std::string> feature_names;
  Eigen::VectorXd scaler_means;
  Eigen::VectorXd scaler_stds;
  std::vector<bool> degenerate_features;
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double threshold = 0.5;
  TrainParams params;
  int iterations = 0;
  bool converged = false;
  double cv_f1 = 0.0;  // out-of-fold F1 at the chosen threshold

  bool operator==(const AggregatorModel& o) const;
};

void to_json(json& j, const AggregatorModel& m);
void from_json(const json& j, AggregatorModel& m);
std::string model_card_text(const AggregatorModel& m);
void write_model_card(const AggregatorModel& m, const std::filesystem::path& path);
AggregatorModel load_model_card(const std::filesystem::path& path);

/// Out-of-fold CV -> F1 threshold -> scaler and LR refit on all rows.
/// X rows are feature vectors in feature_names() order; y holds 0/1 (1 = glitchy).
AggregatorModel train_aggregator(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXi>& y,
                                 const TrainParams& params = {});

/// sigma(w . scale(f) + b).
double model_score(const AggregatorModel& m, const FeatureVector& f);

/// Throws EmptySequence for an empty label sequence.
VideoVerdict predict_video(const AggregatorModel& m, const std::string& video_id, std::span<const FrameLabel> labels);

struct ThresholdRule {
  int k = 0;  // Glitchy iff glitch_count > k

  std::string id() const { return "count_gt_" + std::to_string(k); }
};

VideoVerdict threshold_aggregate(const std::string& video_id, std::span<const FrameLabel> labels, const ThresholdRule& rule);

struct FeatureRow {
  std::string video_id;
  FeatureVector values;
  std::optional<FrameLabel> label;
};

/// Header `video_id,T,frac,max_run,max_win_5,run_density,label`; label is 1, 0 or empty.
std::string feature_csv(const std::vector<FeatureRow>& rows);

}  // namespace resp::aggregate
