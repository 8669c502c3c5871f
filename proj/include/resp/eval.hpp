#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resp/core.hpp"

namespace resp::eval {

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;

  long total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Glitchy is the positive class. Throws LengthMismatch.
ConfusionCounts confusion(std::span<const FrameLabel> pred, std::span<const FrameLabel> truth);

/// Keyed variant; every predicted key must have a truth entry (MissingTruth otherwise).
ConfusionCounts confusion(const std::map<std::string, FrameLabel>& pred, const std::map<std::string, FrameLabel>& truth);

enum class Level { Frame, Video };
std::string_view to_string(Level l);
Level parse_level(std::string_view s);

struct MetricsReport {
  std::string setting_id;
  Level level = Level::Video;
  long n = 0;
  double accuracy = 0, f1 = 0, precision = 0, recall = 0;
  bool precision_undefined = false;  // tp + fp = 0, reported as 0
  bool recall_undefined = false;     // tp + fn = 0, reported as 0
  ConfusionCounts counts;
  std::map<std::string, MetricsReport> per_category;
};

/// Throws EmptyEvaluation when the counts sum to 0.
MetricsReport metrics(const ConfusionCounts& c, const std::string& setting_id = {}, Level level = Level::Video);

json report_json(const MetricsReport& r);
/// One header line plus one row for the overall report and one per category.
std::string report_csv(const MetricsReport& r);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value of Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

struct PairedTestResult {
  double t_stat = 0;
  int df = 0;
  double p_two_sided = 1;
  int n_runs = 0;
  bool significant_at_0_05 = false;
  bool degenerate = false;  // all differences zero
};

/// Paired t-test on per-run scores. Throws LengthMismatch and TooFewRuns (n < 2).
PairedTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

json comparison_json(const std::string& setting_a, const std::string& setting_b, const std::string& metric,
                     const PairedTestResult& r, std::span<const double> a, std::span<const double> b);

struct EvalOptions {
  bool exclude_failed = true;   // frame level: skip predictions whose parse failed
  bool require_truth = false;   // MissingTruth instead of skipping unmatched predictions
  bool per_category = false;
};

/// Category label of a record: its glitch type, or "glitch_free" for clean videos.
std::optional<std::string> category_of(const VideoRecord& r);

/// Frame level: predictions scored against frame truth. Per-category groups come from the
/// video records: each glitch type is scored together with all glitch-free items.
MetricsReport evaluate_frames(const std::vector<FramePrediction>& log, const std::vector<TruthRow>& truth,
                              const std::vector<VideoRecord>& records, const std::string& setting_id,
                              const EvalOptions& opt = {});

/// Video level: verdicts scored against VideoRecord labels.
MetricsReport evaluate_videos(const std::vector<VideoVerdict>& verdicts, const std::vector<VideoRecord>& records,
                              const std::string& setting_id, const EvalOptions& opt = {});

struct RunSummary {
  std::vector<double> accuracy, f1, precision, recall;
  double mean_accuracy = 0, mean_f1 = 0, mean_precision = 0, mean_recall = 0;

  const std::vector<double>& metric(std::string_view name) const;
};

/// Per-run metric series and their means. Throws RunCountMismatch unless reports.size() == expected_runs
/// (expected_runs <= 0 disables the check).
RunSummary summarize_runs(const std::vector<MetricsReport>& reports, int expected_runs = 5);

}  // namespace resp::eval
