#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "resp/core.hpp"

namespace resp::synth {

/// Temporal glitch pattern: clean prefix, one glitchy run starting near onset_fraction * T,
/// clean tail.
struct PatternSpec {
  int min_frames = 25;
  int max_frames = 90;
  double onset_fraction = 1.0 / 3.0;
  int tail_min = 5;
  int tail_max = 15;
  int onset_jitter = 2;  // onset index moves uniformly within +-onset_jitter frames
  std::optional<GlitchType> glitch_type;  // unset: round-robin over the five types
  std::uint64_t seed = 0;
  double fps = 5.0;  // placeholder manifest timestamps

  bool operator==(const PatternSpec&) const = default;
};

/// Throws InvalidConfig.
void validate(const PatternSpec& spec);

/// 1-based inclusive span of the glitchy run.
struct GlitchSpan {
  int start = 0;
  int end = 0;
};

struct TruthSequence {
  std::vector<FrameLabel> labels;
  std::optional<GlitchSpan> span;
};

/// Deterministic in (spec.seed, video_index, glitchy).
TruthSequence gen_truth_sequence(const PatternSpec& spec, int video_index, bool glitchy = true);

struct Corpus {
  std::vector<VideoRecord> records;  // glitchy videos first, then clean
  std::vector<TruthRow> truth;
  std::vector<KeyframeManifest> manifests;  // placeholder image paths under frames_dir
};

/// Video ids are syn_gNNNNN (glitchy) and syn_cNNNNN (clean).
Corpus gen_corpus(int n_glitchy, int n_clean, const PatternSpec& spec,
                  const std::filesystem::path& frames_dir = "frames");

/// Manifest for a label stream with no images: frame t at (t-1)/fps seconds.
KeyframeManifest placeholder_manifest(const std::string& video_id, int T, double fps, const std::filesystem::path& frames_dir);

}  // namespace resp::synth
