#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace resp {

using json = nlohmann::json;

/// Error categories; the CLI maps them onto exit codes.
enum class ErrorKind {
  Config,     // bad configuration or arguments
  Input,      // missing/malformed inputs
  Backend,    // model backend failure
  Invariant,  // internal invariant breach
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable name, e.g. "SchemaViolation".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

// Glitchy serializes as `true`, Clean as `false`.
enum class FrameLabel : std::uint8_t { Clean = 0, Glitchy = 1 };

constexpr bool is_glitchy(FrameLabel l) noexcept { return l == FrameLabel::Glitchy; }
constexpr FrameLabel label_from_bool(bool glitchy) noexcept {
  return glitchy ? FrameLabel::Glitchy : FrameLabel::Clean;
}

enum class GlitchType { MissingObject, Clipping, Floating, CorruptedTexture, LightingIssue };

inline constexpr GlitchType kAllGlitchTypes[] = {GlitchType::MissingObject, GlitchType::Clipping,
                                                 GlitchType::Floating, GlitchType::CorruptedTexture,
                                                 GlitchType::LightingIssue};

std::string_view to_string(GlitchType t);
GlitchType parse_glitch_type(std::string_view s);

enum class PromptKind { SingleFrame, PairCleanRef, PairGlitchyRef };
std::string_view to_string(PromptKind k);
PromptKind parse_prompt_kind(std::string_view s);

enum class ParseStatus { Ok, Recovered, Failed };
std::string_view to_string(ParseStatus s);
ParseStatus parse_parse_status(std::string_view s);

struct Keyframe {
  std::string video_id;
  int index = 0;  // 1-based
  double timestamp_s = 0.0;
  std::filesystem::path image_path;

  bool operator==(const Keyframe&) const = default;
};

struct ExtractionMode {
  enum class Kind { IFrames, FixedFps } kind = Kind::IFrames;
  double rate = 0.0;  // frames per second, FixedFps only

  static ExtractionMode iframes() { return {}; }
  static ExtractionMode fixed_fps(double r) { return {Kind::FixedFps, r}; }
  bool operator==(const ExtractionMode&) const = default;
};

struct KeyframeManifest {
  std::string video_id;
  ExtractionMode mode;
  std::filesystem::path source_video;
  std::vector<std::string> decoder_argv;  // provenance, verbatim
  std::vector<Keyframe> frames;

  int size() const noexcept { return static_cast<int>(frames.size()); }
  bool operator==(const KeyframeManifest&) const = default;
};

struct FramePrediction {
  std::string video_id;
  int frame_index = 0;
  double timestamp_s = 0.0;
  FrameLabel label = FrameLabel::Clean;
  std::string reasoning;
  PromptKind prompt_kind = PromptKind::SingleFrame;
  std::optional<int> reference_index;
  std::optional<FrameLabel> reference_label;
  std::string backend_id;
  std::string raw_response_digest;
  ParseStatus parse_status = ParseStatus::Ok;
  // Extension: set only for curated references outside the manifest (reference_index = 0).
  std::optional<std::string> reference_path;

  bool operator==(const FramePrediction&) const = default;
};

struct VideoRecord {
  std::string video_id;
  std::string path;
  std::optional<FrameLabel> video_label;
  std::optional<GlitchType> glitch_type;
  std::string source_tag;

  bool operator==(const VideoRecord&) const = default;
};

struct VideoVerdict {
  std::string video_id;
  FrameLabel label = FrameLabel::Clean;
  std::string aggregator_id;
  std::optional<double> score;

  bool operator==(const VideoVerdict&) const = default;
};

/// One frame-level ground-truth row.
struct TruthRow {
  std::string video_id;
  int frame_index = 0;
  FrameLabel truth_label = FrameLabel::Clean;

  bool operator==(const TruthRow&) const = default;
};

// JSON mapping (ADL hooks for nlohmann).
void to_json(json& j, const Keyframe& k);
void from_json(const json& j, Keyframe& k);
void to_json(json& j, const ExtractionMode& m);
void from_json(const json& j, ExtractionMode& m);
void to_json(json& j, const KeyframeManifest& m);
void from_json(const json& j, KeyframeManifest& m);
void to_json(json& j, const FramePrediction& p);
void from_json(const json& j, FramePrediction& p);
void to_json(json& j, const VideoRecord& r);
void from_json(const json& j, VideoRecord& r);
void to_json(json& j, const VideoVerdict& v);
void from_json(const json& j, VideoVerdict& v);
void to_json(json& j, const TruthRow& r);
void from_json(const json& j, TruthRow& r);

struct Violation {
  std::size_t position;  // index into the checked log
  std::string video_id;
  int frame_index;
  std::string message;
};

/// Checks per-video contiguity, reference causality and prompt/reference consistency.
/// Expects the log sorted by (video_id, frame_index); unsorted input is itself reported.
std::vector<Violation> validate_prediction_log(const std::vector<FramePrediction>& log);

/// Rejects duplicate video ids in a dataset (ingestion rule).
void check_unique_video_ids(const std::vector<VideoRecord>& records);

}  // namespace resp
