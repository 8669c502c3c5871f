#include "resp/core.hpp"

#include <array>
#include <set>
#include <utility>

namespace resp {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table, const char* what) {
  for (const auto& [e, name] : table)
    if (name == s) return e;
  throw Error(ErrorKind::Input, "SchemaViolation", std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view enum_name(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [v, name] : table)
    if (v == e) return name;
  return "?";
}

constexpr std::array<std::pair<GlitchType, std::string_view>, 5> kGlitchTypeNames{{
    {GlitchType::MissingObject, "missing_object"},
    {GlitchType::Clipping, "clipping"},
    {GlitchType::Floating, "floating"},
    {GlitchType::CorruptedTexture, "corrupted_texture"},
    {GlitchType::LightingIssue, "lighting_issue"},
}};

constexpr std::array<std::pair<PromptKind, std::string_view>, 3> kPromptKindNames{{
    {PromptKind::SingleFrame, "single_frame"},
    {PromptKind::PairCleanRef, "pair_clean_ref"},
    {PromptKind::PairGlitchyRef, "pair_glitchy_ref"},
}};

constexpr std::array<std::pair<ParseStatus, std::string_view>, 3> kParseStatusNames{{
    {ParseStatus::Ok, "ok"},
    {ParseStatus::Recovered, "recovered"},
    {ParseStatus::Failed, "failed"},
}};

json label_json(const std::optional<FrameLabel>& l) {
  if (!l) return nullptr;
  return is_glitchy(*l);
}

std::optional<FrameLabel> optional_label(const json& j) {
  if (j.is_null()) return std::nullopt;
  return label_from_bool(j.get<bool>());
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  if (!v) return nullptr;
  return *v;
}

}  // namespace

std::string_view to_string(GlitchType t) { return enum_name(t, kGlitchTypeNames); }
GlitchType parse_glitch_type(std::string_view s) { return parse_enum(s, kGlitchTypeNames, "glitch_type"); }
std::string_view to_string(PromptKind k) { return enum_name(k, kPromptKindNames); }
PromptKind parse_prompt_kind(std::string_view s) { return parse_enum(s, kPromptKindNames, "prompt_kind"); }
std::string_view to_string(ParseStatus s) { return enum_name(s, kParseStatusNames); }
ParseStatus parse_parse_status(std::string_view s) { return parse_enum(s, kParseStatusNames, "parse_status"); }

void to_json(json& j, const Keyframe& k) {
  j = json{{"video_id", k.video_id},
           {"index", k.index},
           {"timestamp_s", k.timestamp_s},
           {"image_path", k.image_path.string()}};
}

void from_json(const json& j, Keyframe& k) {
  k.video_id = j.at("video_id").get<std::string>();
  k.index = j.at("index").get<int>();
  k.timestamp_s = j.at("timestamp_s").get<double>();
  k.image_path = j.at("image_path").get<std::string>();
}

void to_json(json& j, const ExtractionMode& m) {
  if (m.kind == ExtractionMode::Kind::IFrames)
    j = json{{"kind", "iframes"}};
  else
    j = json{{"kind", "fixed_fps"}, {"rate", m.rate}};
}

void from_json(const json& j, ExtractionMode& m) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "iframes") {
    m = ExtractionMode::iframes();
  } else if (kind == "fixed_fps") {
    m = ExtractionMode::fixed_fps(j.at("rate").get<double>());
  } else {
    throw Error(ErrorKind::Input, "SchemaViolation", "unknown extraction mode '" + kind + "'");
  }
}

void to_json(json& j, const KeyframeManifest& m) {
  j = json{{"video_id", m.video_id},
           {"mode", m.mode},
           {"source_video", m.source_video.string()},
           {"decoder_argv", m.decoder_argv},
           {"frames", m.frames}};
}

void from_json(const json& j, KeyframeManifest& m) {
  m.video_id = j.at("video_id").get<std::string>();
  m.mode = j.at("mode").get<ExtractionMode>();
  m.source_video = j.at("source_video").get<std::string>();
  m.decoder_argv = j.value("decoder_argv", std::vector<std::string>{});
  m.frames = j.at("frames").get<std::vector<Keyframe>>();
}

void to_json(json& j, const FramePrediction& p) {
  j = json{{"video_id", p.video_id},
           {"frame_index", p.frame_index},
           {"timestamp_s", p.timestamp_s},
           {"label", is_glitchy(p.label)},
           {"reasoning", p.reasoning},
           {"prompt_kind", to_string(p.prompt_kind)},
           {"reference_index", optional_json(p.reference_index)},
           {"reference_label", label_json(p.reference_label)},
           {"backend_id", p.backend_id},
           {"raw_response_digest", p.raw_response_digest},
           {"parse_status", to_string(p.parse_status)}};
  if (p.reference_path) j["reference_path"] = *p.reference_path;
}

void from_json(const json& j, FramePrediction& p) {
  p.video_id = j.at("video_id").get<std::string>();
  p.frame_index = j.at("frame_index").get<int>();
  p.timestamp_s = j.at("timestamp_s").get<double>();
  p.label = label_from_bool(j.at("label").get<bool>());
  p.reasoning = j.at("reasoning").get<std::string>();
  p.prompt_kind = parse_prompt_kind(j.at("prompt_kind").get<std::string>());
  const auto& ri = j.at("reference_index");
  p.reference_index = ri.is_null() ? std::nullopt : std::optional<int>(ri.get<int>());
  p.reference_label = optional_label(j.at("reference_label"));
  p.backend_id = j.at("backend_id").get<std::string>();
  p.raw_response_digest = j.at("raw_response_digest").get<std::string>();
  p.parse_status = parse_parse_status(j.at("parse_status").get<std::string>());
  if (auto it = j.find("reference_path"); it != j.end() && !it->is_null())
    p.reference_path = it->get<std::string>();
  else
    p.reference_path.reset();
}

void to_json(json& j, const VideoRecord& r) {
  j = json{{"video_id", r.video_id},
           {"path", r.path},
           {"video_label", label_json(r.video_label)},
           {"glitch_type", r.glitch_type ? json(to_string(*r.glitch_type)) : json(nullptr)},
           {"source_tag", r.source_tag}};
}

void from_json(const json& j, VideoRecord& r) {
  r.video_id = j.at("video_id").get<std::string>();
  r.path = j.at("path").get<std::string>();
  r.video_label = optional_label(j.at("video_label"));
  const auto& gt = j.at("glitch_type");
  r.glitch_type = gt.is_null() ? std::nullopt : std::optional(parse_glitch_type(gt.get<std::string>()));
  r.source_tag = j.value("source_tag", std::string{});
  if (r.glitch_type && r.video_label != FrameLabel::Glitchy)
    throw Error(ErrorKind::Input, "SchemaViolation", "glitch_type set on a video not labeled glitchy: " + r.video_id);
}

void to_json(json& j, const VideoVerdict& v) {
  j = json{{"video_id", v.video_id},
           {"label", is_glitchy(v.label)},
           {"aggregator_id", v.aggregator_id},
           {"score", optional_json(v.score)}};
}

void from_json(const json& j, VideoVerdict& v) {
  v.video_id = j.at("video_id").get<std::string>();
  v.label = label_from_bool(j.at("label").get<bool>());
  v.aggregator_id = j.at("aggregator_id").get<std::string>();
  const auto& s = j.at("score");
  v.score = s.is_null() ? std::nullopt : std::optional<double>(s.get<double>());
}

void to_json(json& j, const TruthRow& r) {
  j = json{{"video_id", r.video_id}, {"frame_index", r.frame_index}, {"truth_label", is_glitchy(r.truth_label)}};
}

void from_json(const json& j, TruthRow& r) {
  r.video_id = j.at("video_id").get<std::string>();
  r.frame_index = j.at("frame_index").get<int>();
  r.truth_label = label_from_bool(j.at("truth_label").get<bool>());
}

std::vector<Violation> validate_prediction_log(const std::vector<FramePrediction>& log) {
  std::vector<Violation> out;
  auto flag = [&](std::size_t i, std::string msg) {
    out.push_back({i, log[i].video_id, log[i].frame_index, std::move(msg)});
  };

  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& p = log[i];
    const bool first_of_video = i == 0 || log[i - 1].video_id != p.video_id;

    if (i > 0 && std::pair(log[i - 1].video_id, log[i - 1].frame_index) >= std::pair(p.video_id, p.frame_index))
      flag(i, "log not sorted by (video_id, frame_index)");

    if (first_of_video) {
      if (p.frame_index != 1) flag(i, "indices must start at 1");
    } else if (log[i - 1].video_id == p.video_id && p.frame_index != log[i - 1].frame_index + 1) {
      flag(i, "indices not contiguous");
    }

    if (p.frame_index == 1 && p.prompt_kind != PromptKind::SingleFrame)
      flag(i, "first frame must be single-frame prompted");

    const bool single = p.prompt_kind == PromptKind::SingleFrame;
    if (single && p.reference_index) flag(i, "single-frame prompt carries a reference");
    if (!single && !p.reference_index) flag(i, "pair prompt without reference");
    if (single && p.reference_label) flag(i, "single-frame prompt carries a reference label");

    if (p.reference_index) {
      if (*p.reference_index >= p.frame_index) flag(i, "reference not strictly earlier");
      if (*p.reference_index < 0) flag(i, "negative reference index");
      if (*p.reference_index == 0 && !p.reference_path) flag(i, "reference index 0 without reference_path");
    }
    if (p.prompt_kind == PromptKind::PairCleanRef && p.reference_label != FrameLabel::Clean)
      flag(i, "clean-reference prompt requires a clean reference label");
    if (p.prompt_kind == PromptKind::PairGlitchyRef && p.reference_label != FrameLabel::Glitchy)
      flag(i, "glitchy-reference prompt requires a glitchy reference label");
  }
  return out;
}

void check_unique_video_ids(const std::vector<VideoRecord>& records) {
  std::set<std::string> seen;
  for (const auto& r : records)
    if (!seen.insert(r.video_id).second)
      throw Error(ErrorKind::Input, "DuplicateVideoId", r.video_id);
}

}  // namespace resp
