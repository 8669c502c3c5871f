#include <algorithm>
#include <charconv>
#include <iostream>
#include <mutex>

#include "options.hpp"
#include "resp/rng.hpp"

namespace resp::cli {

std::atomic<bool> g_cancel{false};

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return kExitConfig;
    case ErrorKind::Input: return kExitInput;
    case ErrorKind::Backend: return kExitBackend;
    case ErrorKind::Invariant: return kExitInvariant;
  }
  return kExitInvariant;
}

void log_line(const GlobalOptions& g, const std::string& msg) {
  if (g.quiet) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "resp: " << msg << '\n';
}

Split split_train_holdout(const std::vector<VideoRecord>& records, int n_glitchy, int n_clean, std::uint64_t seed) {
  Split out;
  for (bool glitchy : {true, false}) {
    std::vector<std::string> ids;
    for (const auto& r : records)
      if (r.video_label && is_glitchy(*r.video_label) == glitchy) ids.push_back(r.video_id);
    std::sort(ids.begin(), ids.end());
    const int want = glitchy ? n_glitchy : n_clean;
    if (want < 0 || static_cast<int>(ids.size()) < want)
      throw Error(ErrorKind::Input, "InsufficientVideos",
                  std::string(glitchy ? "glitchy" : "clean") + " videos: need " + std::to_string(want) + ", have " +
                      std::to_string(ids.size()));
    rng::CounterRng gen(rng::derive_key(seed, {0x73706c6974ULL, glitchy ? 1u : 0u}));
    rng::shuffle(ids.begin(), ids.end(), gen);
    out.train.insert(out.train.end(), ids.begin(), ids.begin() + want);
    out.holdout.insert(out.holdout.end(), ids.begin() + want, ids.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.holdout.begin(), out.holdout.end());
  return out;
}

std::string AggregatorChoice::id() const { return kind == Kind::Lr ? "lr" : "count_gt_" + std::to_string(k); }

AggregatorChoice parse_aggregator(const std::string& s) {
  if (s == "lr") return {AggregatorChoice::Kind::Lr, 0};
  constexpr std::string_view prefix = "count_gt_";
  if (s.rfind(prefix, 0) == 0) {
    int k = -1;
    const char* first = s.data() + prefix.size();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, k);
    if (ec == std::errc{} && ptr == last && first != last && k >= 0) return {AggregatorChoice::Kind::Count, k};
  }
  throw Error(ErrorKind::Config, "InvalidConfig", "aggregator must be 'lr' or 'count_gt_<k>' with k >= 0, got '" + s + "'");
}

std::filesystem::path Layout::video_log(const std::string& setting, const std::string& video_id) const {
  return logs() / setting / (video_id + ".jsonl");
}

std::filesystem::path Layout::merged_log(const std::string& setting) const { return logs() / (setting + ".jsonl"); }

std::filesystem::path Layout::model_card(const std::string& setting, std::uint64_t seed) const {
  return models() / (setting + "__seed" + std::to_string(seed) + ".model.json");
}

std::filesystem::path Layout::verdicts(const std::string& setting, const std::string& agg,
                                       std::optional<std::uint64_t> seed) const {
  std::string name = setting + "." + agg;
  if (seed) name += ".seed" + std::to_string(*seed);
  return logs() / (name + ".verdicts.jsonl");
}

std::filesystem::path Layout::report(const std::string& stem) const { return reports() / (stem + ".json"); }

backend::BackendSpec backend_spec(const PredictOptions& o) {
  backend::BackendSpec spec;
  if (o.image_max_dim < 0) throw Error(ErrorKind::Config, "InvalidConfig", "image-max-dim must be >= 0");
  if (o.image_max_dim > 0) spec.request_image_max_dim = o.image_max_dim;
  if (o.backend == "simulated") {
    spec.kind = backend::SimulatedSpec{o.tpr, o.fpr, o.sim_seed};
  } else if (o.backend == "replay") {
    if (o.cache_dir.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "replay backend needs --cache-dir");
    spec.kind = backend::ReplaySpec{o.cache_dir, !o.replay_lenient};
  } else if (o.backend == "http") {
    spec.kind = backend::HttpChatSpec{o.endpoint, o.model, o.api_key_env, o.timeout_s, o.max_retries, o.backoff_s};
  } else {
    throw Error(ErrorKind::Config, "InvalidConfig", "backend must be simulated, replay or http, got '" + o.backend + "'");
  }
  backend::validate(spec);
  return spec;
}

sequencer::ReferencePolicy reference_policy(const PredictOptions& o) {
  using Kind = sequencer::ReferencePolicy::Kind;
  switch (sequencer::parse_policy_kind(o.policy)) {
    case Kind::NoRef: return sequencer::ReferencePolicy::no_ref();
    case Kind::LastCleanFrame: return sequencer::ReferencePolicy::last_clean_frame();
    case Kind::PreviousFrame: return sequencer::ReferencePolicy::previous_frame();
    case Kind::RandomFrame: return sequencer::ReferencePolicy::random_frame(o.policy_seed);
    case Kind::ManualPairs:
      if (o.pairs.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "manual policy needs --pairs");
      return sequencer::ReferencePolicy::manual_pairs(
          std::make_shared<const sequencer::PairTable>(sequencer::load_pair_table(o.pairs)));
  }
  throw Error(ErrorKind::Invariant, "Unreachable", "policy kind");
}

}  // namespace resp::cli
