#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "resp/backend.hpp"
#include "resp/core.hpp"
#include "resp/prompting.hpp"

namespace resp::sequencer {

/// Curated references for the oracle setting: (video_id, frame_index) -> reference image.
class PairTable {
 public:
  void set(const std::string& video_id, int frame_index, std::filesystem::path reference);
  const std::filesystem::path* find(const std::string& video_id, int frame_index) const;
  std::size_t size() const noexcept { return rows_.size(); }

 private:
  std::map<std::pair<std::string, int>, std::filesystem::path> rows_;
};

/// Reads JSONL rows {video_id, frame_index, reference_path}.
PairTable load_pair_table(const std::filesystem::path& path);

struct ReferencePolicy {
  enum class Kind { NoRef, LastCleanFrame, PreviousFrame, RandomFrame, ManualPairs };

  Kind kind = Kind::LastCleanFrame;
  std::uint64_t seed = 0;                    // RandomFrame
  std::shared_ptr<const PairTable> pairs;    // ManualPairs

  static ReferencePolicy no_ref() { return {Kind::NoRef, 0, nullptr}; }
  static ReferencePolicy last_clean_frame() { return {Kind::LastCleanFrame, 0, nullptr}; }
  static ReferencePolicy previous_frame() { return {Kind::PreviousFrame, 0, nullptr}; }
  static ReferencePolicy random_frame(std::uint64_t seed) { return {Kind::RandomFrame, seed, nullptr}; }
  static ReferencePolicy manual_pairs(std::shared_ptr<const PairTable> t) { return {Kind::ManualPairs, 0, std::move(t)}; }

  std::string name() const;
};

ReferencePolicy::Kind parse_policy_kind(std::string_view s);

struct PoolEntry {
  Keyframe frame;
  FrameLabel label;
};

/// Causal store of processed frames; append-only, in frame order.
class ReferencePool {
 public:
  void append(Keyframe frame, FrameLabel label);
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  /// 1-based, matching frame indices.
  const PoolEntry& at(int index) const { return entries_.at(static_cast<std::size_t>(index - 1)); }
  const std::vector<PoolEntry>& entries() const noexcept { return entries_; }

 private:
  std::vector<PoolEntry> entries_;
};

struct SelectedReference {
  int index = 0;  // 0 for curated references outside the manifest
  std::filesystem::path image_path;
  FrameLabel label = FrameLabel::Clean;
};

/// Reference for test frame t given a pool holding frames 1..t-1. `video_id` keys RandomFrame
/// draws and ManualPairs lookups. Returns nullopt for t = 1 and for NoRef.
std::optional<SelectedReference> select_reference(const ReferencePool& pool, const ReferencePolicy& policy,
                                                  const std::string& video_id, int t);

struct SequencerConfig {
  FrameLabel default_on_fail = FrameLabel::Clean;
  /// Earlier predictions for this video (frames 1..k) to resume from; they rebuild the pool.
  std::vector<FramePrediction> resume_from;
  /// Called after each new prediction, before the next frame is processed.
  std::function<void(const FramePrediction&)> on_prediction;
};

/// Runs reference-guided sequential prompting over one video's keyframes.
std::vector<FramePrediction> process_video(const KeyframeManifest& manifest, const ReferencePolicy& policy,
                                           backend::Backend& backend, const prompting::CategorySet& cats,
                                           const SequencerConfig& cfg = {});

}  // namespace resp::sequencer
