#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "resp/backend.hpp"
#include "resp/cli.hpp"
#include "resp/sequencer.hpp"
#include "resp/synth.hpp"

namespace resp::cli {

struct GlobalOptions {
  std::filesystem::path output_dir = "out";
  std::filesystem::path dataset;  // default <output_dir>/dataset.jsonl
  std::filesystem::path truth;    // default <output_dir>/truth.jsonl
  int workers = 4;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int train_glitchy = 100;
  int train_clean = 100;
  bool quiet = false;

  Layout layout() const { return {output_dir}; }
  std::filesystem::path dataset_path() const { return dataset.empty() ? output_dir / "dataset.jsonl" : dataset; }
  std::filesystem::path truth_path() const { return truth.empty() ? output_dir / "truth.jsonl" : truth; }
};

struct SimulateOptions {
  int n_glitchy = 500;
  int n_clean = 500;
  synth::PatternSpec pattern;
  std::string glitch_type;  // empty: round-robin
};

struct ExtractOptions {
  std::vector<std::filesystem::path> videos;  // empty: paths from the dataset
  std::string mode = "iframes";
  double fps = 5.0;
  std::string format = "png";
  int quality = 90;
  std::string decoder;
  std::filesystem::path frames_dir;  // default <output_dir>/frames
};

struct PredictOptions {
  std::string setting;
  std::string backend = "simulated";
  double tpr = 1.0;
  double fpr = 0.0;
  std::uint64_t sim_seed = 0;
  std::filesystem::path cache_dir;
  bool replay_lenient = false;
  bool replay_record = false;  // forward misses to the HTTP backend and cache them
  std::string endpoint;
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_s = 120.0;
  int max_retries = 3;
  double backoff_s = 1.0;
  int image_max_dim = 0;  // 0: no limit
  std::string policy = "last-clean";
  std::uint64_t policy_seed = 0;
  std::filesystem::path pairs;
  std::string categories = "refglitch5";
  std::string default_on_fail = "clean";
};

struct TrainOptions {
  std::string setting;
  double C = 3.0;
  int k_folds = 5;
  int max_iter = 500;
  double tol = 1e-6;
  bool exclude_failed = false;
};

struct AggregateOptions {
  std::string setting;
  std::string aggregator = "lr";
  std::filesystem::path model;  // explicit model card instead of the per-seed models
  bool exclude_failed = false;
};

struct EvaluateOptions {
  std::string setting;
  std::string level = "video";
  std::string aggregator = "lr";
  bool holdout = false;
  bool per_category = false;
  int runs = 5;  // expected number of seeds; 0 disables the check
  std::filesystem::path log;       // frame level: explicit prediction log
  std::filesystem::path verdicts;  // video level: explicit verdict file
  bool include_failed = false;     // frame level
};

struct CompareOptions {
  std::string setting_a;
  std::string setting_b;
  std::string aggregator = "lr";
  std::string metric = "both";
  int runs = 5;
};

struct RunStats {
  std::atomic<long> backend_calls{0};
  std::vector<std::string> outputs;
};

void cmd_simulate(const GlobalOptions& g, const SimulateOptions& o, RunStats& stats);
void cmd_extract(const GlobalOptions& g, const ExtractOptions& o, RunStats& stats);
void cmd_predict(const GlobalOptions& g, const PredictOptions& o, RunStats& stats);
void cmd_train(const GlobalOptions& g, const TrainOptions& o, RunStats& stats);
void cmd_aggregate(const GlobalOptions& g, const AggregateOptions& o, RunStats& stats);
void cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o, RunStats& stats);
void cmd_compare(const GlobalOptions& g, const CompareOptions& o, RunStats& stats);

backend::BackendSpec backend_spec(const PredictOptions& o);
sequencer::ReferencePolicy reference_policy(const PredictOptions& o);

/// Set by SIGINT/SIGTERM; long-running commands stop at the next frame boundary.
extern std::atomic<bool> g_cancel;

void log_line(const GlobalOptions& g, const std::string& msg);

}  // namespace resp::cli
