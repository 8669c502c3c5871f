#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "resp/core.hpp"

namespace resp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInput = 3;
inline constexpr int kExitBackend = 4;
inline constexpr int kExitInvariant = 5;
inline constexpr int kExitCancelled = 130;

int exit_code(ErrorKind kind) noexcept;

/// Entry point; args excludes the program name. Never throws.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

/// Deterministic train/holdout split: per class, ids sorted then shuffled by (seed, class);
/// the first n_glitchy / n_clean go to train. Throws InsufficientVideos.
struct Split {
  std::vector<std::string> train;
  std::vector<std::string> holdout;
};
Split split_train_holdout(const std::vector<VideoRecord>& records, int n_glitchy, int n_clean, std::uint64_t seed);

/// Parses "lr" or "count_gt_<k>".
struct AggregatorChoice {
  enum class Kind { Lr, Count } kind = Kind::Lr;
  int k = 0;
  std::string id() const;
};
AggregatorChoice parse_aggregator(const std::string& s);

/// Output layout below the run's output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path manifests() const { return root / "manifests"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path models() const { return root / "models"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path runmeta() const { return root / "runmeta"; }

  std::filesystem::path video_log(const std::string& setting, const std::string& video_id) const;
  std::filesystem::path merged_log(const std::string& setting) const;
  std::filesystem::path model_card(const std::string& setting, std::uint64_t seed) const;
  std::filesystem::path verdicts(const std::string& setting, const std::string& agg, std::optional<std::uint64_t> seed) const;
  std::filesystem::path report(const std::string& stem) const;
};

}  // namespace resp::cli
