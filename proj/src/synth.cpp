#include "resp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "resp/rng.hpp"

namespace resp::synth {

namespace {

constexpr std::uint64_t kGlitchyStream = 0x676c69746368ULL;
constexpr std::uint64_t kCleanStream = 0x636c65616eULL;

std::string numbered(char kind, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "syn_%c%05d", kind, i);
  return buf;
}

}  // namespace

void validate(const PatternSpec& s) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::Config, "InvalidConfig", "pattern: " + msg); };
  if (!(s.onset_fraction > 0 && s.onset_fraction < 1)) fail("onset_fraction must be in (0,1)");
  if (s.tail_min < 1 || s.tail_max < s.tail_min) fail("tail range must satisfy 1 <= tail_min <= tail_max");
  if (s.min_frames < 1 || s.max_frames < s.min_frames) fail("frame range must satisfy 1 <= min_frames <= max_frames");
  if (s.min_frames < s.tail_max + 2) fail("min_frames must leave room for a clean first frame, one glitchy frame and the tail");
  if (s.onset_jitter < 0) fail("onset_jitter must be >= 0");
  if (!(s.fps > 0)) fail("fps must be > 0");
}

TruthSequence gen_truth_sequence(const PatternSpec& spec, int video_index, bool glitchy) {
  validate(spec);
  rng::CounterRng gen(rng::derive_key(spec.seed, {glitchy ? kGlitchyStream : kCleanStream, static_cast<std::uint64_t>(video_index)}));
  const int T = static_cast<int>(gen.between(spec.min_frames, spec.max_frames));
  TruthSequence out;
  out.labels.assign(static_cast<std::size_t>(T), FrameLabel::Clean);
  if (!glitchy) return out;

  const int tail = static_cast<int>(gen.between(spec.tail_min, spec.tail_max));
  const int jitter = static_cast<int>(gen.between(-spec.onset_jitter, spec.onset_jitter));
  const int end = T - tail;  // >= 2 by validate
  int start = static_cast<int>(std::lround(spec.onset_fraction * T)) + jitter;
  start = std::clamp(start, 2, end);
  for (int t = start; t <= end; ++t) out.labels[static_cast<std::size_t>(t - 1)] = FrameLabel::Glitchy;
  out.span = GlitchSpan{start, end};
  return out;
}

KeyframeManifest placeholder_manifest(const std::string& video_id, int T, double fps, const std::filesystem::path& frames_dir) {
  KeyframeManifest m;
  m.video_id = video_id;
  m.mode = ExtractionMode::fixed_fps(fps);
  m.source_video = "synthetic/" + video_id;
  for (int t = 1; t <= T; ++t) {
    char name[64];
    std::snprintf(name, sizeof name, "_%05d.png", t);
    m.frames.push_back({video_id, t, (t - 1) / fps, frames_dir / (video_id + name)});
  }
  return m;
}

Corpus gen_corpus(int n_glitchy, int n_clean, const PatternSpec& spec, const std::filesystem::path& frames_dir) {
  if (n_glitchy < 0 || n_clean < 0) throw Error(ErrorKind::Config, "InvalidConfig", "corpus counts must be >= 0");
  validate(spec);
  Corpus c;
  auto add = [&](const std::string& id, const TruthSequence& seq, std::optional<GlitchType> type) {
    const bool glitchy = seq.span.has_value();
    c.records.push_back({id, "synthetic/" + id, label_from_bool(glitchy), type, "synthetic"});
    for (std::size_t t = 0; t < seq.labels.size(); ++t) c.truth.push_back({id, static_cast<int>(t + 1), seq.labels[t]});
    c.manifests.push_back(placeholder_manifest(id, static_cast<int>(seq.labels.size()), spec.fps, frames_dir));
  };
  for (int i = 0; i < n_glitchy; ++i) {
    const GlitchType type = spec.glitch_type.value_or(kAllGlitchTypes[static_cast<std::size_t>(i) % std::size(kAllGlitchTypes)]);
    add(numbered('g', i + 1), gen_truth_sequence(spec, i, true), type);
  }
  for (int i = 0; i < n_clean; ++i) add(numbered('c', i + 1), gen_truth_sequence(spec, i, false), std::nullopt);
  return c;
}

}  // namespace resp::synth
