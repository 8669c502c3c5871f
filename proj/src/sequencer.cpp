#include "resp/sequencer.hpp"

#include "resp/io.hpp"
#include "resp/rng.hpp"

namespace resp::sequencer {

namespace fs = std::filesystem;

void PairTable::set(const std::string& video_id, int frame_index, fs::path reference) {
  rows_[{video_id, frame_index}] = std::move(reference);
}

const fs::path* PairTable::find(const std::string& video_id, int frame_index) const {
  auto it = rows_.find({video_id, frame_index});
  return it == rows_.end() ? nullptr : &it->second;
}

namespace {

struct PairRow {
  std::string video_id;
  int frame_index;
  std::string reference_path;
};

void from_json(const json& j, PairRow& r) {
  r.video_id = j.at("video_id").get<std::string>();
  r.frame_index = j.at("frame_index").get<int>();
  r.reference_path = j.at("reference_path").get<std::string>();
}

}  // namespace

PairTable load_pair_table(const fs::path& path) {
  PairTable t;
  for (const auto& r : io::read_jsonl<PairRow>(path)) t.set(r.video_id, r.frame_index, r.reference_path);
  return t;
}

std::string ReferencePolicy::name() const {
  switch (kind) {
    case Kind::NoRef:
      return "noref";
    case Kind::LastCleanFrame:
      return "last-clean";
    case Kind::PreviousFrame:
      return "previous";
    case Kind::RandomFrame:
      return "random";
    case Kind::ManualPairs:
      return "manual";
  }
  return "?";
}

ReferencePolicy::Kind parse_policy_kind(std::string_view s) {
  using K = ReferencePolicy::Kind;
  if (s == "noref") return K::NoRef;
  if (s == "last-clean") return K::LastCleanFrame;
  if (s == "previous") return K::PreviousFrame;
  if (s == "random") return K::RandomFrame;
  if (s == "manual") return K::ManualPairs;
  throw Error(ErrorKind::Config, "InvalidConfig", "unknown reference policy '" + std::string(s) + "'");
}

void ReferencePool::append(Keyframe frame, FrameLabel label) {
  if (frame.index != static_cast<int>(entries_.size()) + 1)
    throw Error(ErrorKind::Invariant, "PoolOrder",
                "pool expects frame " + std::to_string(entries_.size() + 1) + ", got " + std::to_string(frame.index));
  entries_.push_back({std::move(frame), label});
}

std::optional<SelectedReference> select_reference(const ReferencePool& pool, const ReferencePolicy& policy,
                                                  const std::string& video_id, int t) {
  using K = ReferencePolicy::Kind;
  if (static_cast<int>(pool.size()) != t - 1)
    throw Error(ErrorKind::Invariant, "PoolSize",
                "pool holds " + std::to_string(pool.size()) + " entries at t=" + std::to_string(t));
  if (t <= 1 || policy.kind == K::NoRef) return std::nullopt;

  auto from_pool = [&](int index) {
    const auto& e = pool.at(index);
    return SelectedReference{index, e.frame.image_path, e.label};
  };

  switch (policy.kind) {
    case K::PreviousFrame:
      return from_pool(t - 1);
    case K::LastCleanFrame:
      for (int i = t - 1; i >= 1; --i)
        if (pool.at(i).label == FrameLabel::Clean) return from_pool(i);
      return from_pool(t - 1);
    case K::RandomFrame: {
      rng::CounterRng gen(rng::derive_key(policy.seed, {rng::hash_string(video_id), static_cast<std::uint64_t>(t)}));
      return from_pool(1 + static_cast<int>(gen.below(static_cast<std::uint64_t>(t - 1))));
    }
    case K::ManualPairs: {
      const fs::path* ref = policy.pairs ? policy.pairs->find(video_id, t) : nullptr;
      if (!ref) throw Error(ErrorKind::Input, "PairMissing", video_id + " frame " + std::to_string(t));
      return SelectedReference{0, *ref, FrameLabel::Clean};
    }
    case K::NoRef:
      break;
  }
  return std::nullopt;
}

std::vector<FramePrediction> process_video(const KeyframeManifest& manifest, const ReferencePolicy& policy,
                                           backend::Backend& backend, const prompting::CategorySet& cats,
                                           const SequencerConfig& cfg) {
  const std::string prompts[] = {prompting::render_prompt(PromptKind::SingleFrame, cats),
                                 prompting::render_prompt(PromptKind::PairCleanRef, cats),
                                 prompting::render_prompt(PromptKind::PairGlitchyRef, cats)};
  const std::string backend_id = backend.id();

  ReferencePool pool;
  std::vector<FramePrediction> out;
  out.reserve(manifest.frames.size());

  for (const auto& prior : cfg.resume_from) {
    const int t = static_cast<int>(out.size()) + 1;
    if (prior.video_id != manifest.video_id || prior.frame_index != t || t > manifest.size())
      throw Error(ErrorKind::Input, "ResumeMismatch",
                  manifest.video_id + ": prior log does not cover frames 1.." + std::to_string(t) + " contiguously");
    pool.append(manifest.frames[static_cast<std::size_t>(t - 1)], prior.label);
    out.push_back(prior);
  }

  for (std::size_t i = out.size(); i < manifest.frames.size(); ++i) {
    const Keyframe& frame = manifest.frames[i];
    const int t = static_cast<int>(i) + 1;
    const auto ref = select_reference(pool, policy, manifest.video_id, t);

    PromptKind kind = PromptKind::SingleFrame;
    std::vector<fs::path> images;
    if (ref) {
      kind = ref->label == FrameLabel::Clean ? PromptKind::PairCleanRef : PromptKind::PairGlitchyRef;
      images.push_back(ref->image_path);
    }
    images.push_back(frame.image_path);

    std::string raw;
    try {
      raw = backend.query(prompts[static_cast<int>(kind)], images, {manifest.video_id, t, kind});
    } catch (const Error& e) {
      throw Error(e.kind(), e.code(), "video " + manifest.video_id + " t=" + std::to_string(t) + ": " + e.what());
    }
    const auto verdict = prompting::parse_verdict(raw, cfg.default_on_fail);

    FramePrediction p;
    p.video_id = manifest.video_id;
    p.frame_index = t;
    p.timestamp_s = frame.timestamp_s;
    p.label = verdict.label();
    p.reasoning = verdict.reasoning;
    p.prompt_kind = kind;
    if (ref) {
      p.reference_index = ref->index;
      p.reference_label = ref->label;
      if (ref->index == 0) p.reference_path = ref->image_path.string();
    }
    p.backend_id = backend_id;
    p.raw_response_digest = io::sha256_hex(raw);
    p.parse_status = verdict.parse_status;

    // Failed parses keep their defaulted label and still enter the pool.
    pool.append(frame, p.label);
    if (cfg.on_prediction) cfg.on_prediction(p);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace resp::sequencer
