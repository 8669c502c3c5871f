#include "resp/backend.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

#include "resp/io.hpp"
#include "resp/prompting.hpp"
#include "resp/rng.hpp"

namespace resp::backend {

namespace fs = std::filesystem;

void validate(const BackendSpec& spec) {
  if (auto* sim = std::get_if<SimulatedSpec>(&spec.kind)) {
    if (!(sim->tpr >= 0 && sim->tpr <= 1) || !(sim->fpr >= 0 && sim->fpr <= 1))
      throw Error(ErrorKind::Config, "InvalidConfig", "simulated tpr/fpr must lie in [0, 1]");
  } else if (auto* http = std::get_if<HttpChatSpec>(&spec.kind)) {
    if (http->endpoint_url.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "http endpoint is empty");
    if (http->model_name.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "http model name is empty");
    if (http->max_retries < 0) throw Error(ErrorKind::Config, "InvalidConfig", "max_retries must be >= 0");
  } else if (auto* replay = std::get_if<ReplaySpec>(&spec.kind)) {
    if (replay->cache_dir.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "replay cache_dir is empty");
  }
  if (spec.request_image_max_dim && *spec.request_image_max_dim <= 0)
    throw Error(ErrorKind::Config, "InvalidConfig", "request_image_max_dim must be positive");
}

TruthTable::TruthTable(const std::vector<TruthRow>& rows) {
  for (const auto& r : rows) set(r.video_id, r.frame_index, r.truth_label);
}

void TruthTable::set(const std::string& video_id, int frame_index, FrameLabel label) {
  rows_[{video_id, frame_index}] = label;
}

std::optional<FrameLabel> TruthTable::find(const std::string& video_id, int frame_index) const {
  auto it = rows_.find({video_id, frame_index});
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

std::vector<FrameLabel> TruthTable::sequence(const std::string& video_id) const {
  std::vector<FrameLabel> out;
  for (auto it = rows_.lower_bound({video_id, 1}); it != rows_.end() && it->first.first == video_id; ++it) {
    if (it->first.second != static_cast<int>(out.size()) + 1) break;
    out.push_back(it->second);
  }
  return out;
}

SimulatedBackend::SimulatedBackend(SimulatedSpec spec, std::shared_ptr<const TruthTable> truth)
    : spec_(spec), truth_(std::move(truth)) {
  validate(BackendSpec{spec_, std::nullopt});
  if (!truth_) throw Error(ErrorKind::Config, "InvalidConfig", "simulated backend requires a truth table");
}

bool SimulatedBackend::draw(const std::string& video_id, int frame_index, FrameLabel truth) const {
  rng::CounterRng gen(rng::derive_key(spec_.seed, {rng::hash_string(video_id), static_cast<std::uint64_t>(frame_index)}));
  const double rate = is_glitchy(truth) ? spec_.tpr : spec_.fpr;
  return gen.uniform01() < rate;
}

std::string SimulatedBackend::query(const std::string&, std::span<const fs::path>, const QueryContext& ctx) {
  auto truth = truth_->find(ctx.video_id, ctx.frame_index);
  if (!truth)
    throw Error(ErrorKind::Backend, "TruthMissing", ctx.video_id + " frame " + std::to_string(ctx.frame_index));
  return prompting::canonical_verdict_json("simulated verdict", draw(ctx.video_id, ctx.frame_index, *truth));
}

std::string SimulatedBackend::id() const {
  std::ostringstream ss;
  ss << "simulated(tpr=" << spec_.tpr << ",fpr=" << spec_.fpr << ",seed=" << spec_.seed << ")";
  return ss.str();
}

ReplayBackend::ReplayBackend(ReplaySpec spec, std::unique_ptr<Backend> inner)
    : spec_(std::move(spec)), inner_(std::move(inner)) {
  fs::create_directories(spec_.cache_dir);
}

std::string ReplayBackend::request_digest(const std::string& prompt, std::span<const fs::path> images,
                                          const QueryContext& ctx) {
  json image_digests = json::array();
  for (const auto& img : images)
    image_digests.push_back(fs::exists(img) ? io::sha256_file_hex(img) : io::sha256_hex("missing:" + img.string()));
  json key{{"video_id", ctx.video_id},
           {"frame_index", ctx.frame_index},
           {"prompt_kind", to_string(ctx.kind)},
           {"prompt_sha256", io::sha256_hex(prompt)},
           {"images", image_digests}};
  return io::sha256_hex(key.dump());
}

fs::path ReplayBackend::cache_file(const std::string& digest) const { return spec_.cache_dir / (digest + ".json"); }
fs::path ReplayBackend::misses_file() const { return spec_.cache_dir / "misses.jsonl"; }

void ReplayBackend::store(const std::string& digest, const std::string& raw_response) const {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  json entry{{"request_digest", digest}, {"raw_response", raw_response}, {"timestamp", ts.str()}};
  io::write_text_atomic(cache_file(digest), entry.dump(2) + "\n");
}

std::string ReplayBackend::query(const std::string& prompt, std::span<const fs::path> images,
                                 const QueryContext& ctx) {
  const auto digest = request_digest(prompt, images, ctx);
  const auto file = cache_file(digest);
  if (fs::exists(file)) {
    try {
      return json::parse(io::read_text(file)).at("raw_response").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Input, "SchemaViolation", file.string() + ": " + e.what());
    }
  }
  io::append_line(misses_file(), json{{"request_digest", digest},
                                      {"video_id", ctx.video_id},
                                      {"frame_index", ctx.frame_index},
                                      {"prompt_kind", to_string(ctx.kind)}}
                                     .dump());
  if (inner_) {
    auto raw = inner_->query(prompt, images, ctx);
    store(digest, raw);
    return raw;
  }
  if (spec_.strict)
    throw Error(ErrorKind::Backend, "CacheMiss", ctx.video_id + " frame " + std::to_string(ctx.frame_index));
  return {};
}

std::string ReplayBackend::id() const { return inner_ ? "replay+" + inner_->id() : "replay"; }

std::unique_ptr<Backend> make_backend(const BackendSpec& spec, std::shared_ptr<const TruthTable> truth,
                                      std::unique_ptr<Backend> replay_inner) {
  validate(spec);
  return std::visit(
      [&](const auto& k) -> std::unique_ptr<Backend> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, SimulatedSpec>) {
          return std::make_unique<SimulatedBackend>(k, truth);
        } else if constexpr (std::is_same_v<K, ReplaySpec>) {
          return std::make_unique<ReplayBackend>(k, std::move(replay_inner));
        } else {
          return std::make_unique<HttpChatBackend>(k, spec.request_image_max_dim);
        }
      },
      spec.kind);
}

}  // namespace resp::backend
