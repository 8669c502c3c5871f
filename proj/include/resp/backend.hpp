#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "resp/core.hpp"

namespace resp::backend {

struct HttpChatSpec {
  std::string endpoint_url;  // base URL; "/chat/completions" is appended unless already present
  std::string model_name;
  std::string api_key_env_var = "OPENAI_API_KEY";
  double timeout_s = 120.0;
  int max_retries = 3;
  double backoff_initial_s = 1.0;  // doubles after every failed attempt
};

struct ReplaySpec {
  std::filesystem::path cache_dir;
  bool strict = true;  // a miss throws CacheMiss when there is no inner backend
};

struct SimulatedSpec {
  double tpr = 1.0;
  double fpr = 0.0;
  std::uint64_t seed = 0;
};

struct BackendSpec {
  std::variant<HttpChatSpec, ReplaySpec, SimulatedSpec> kind;
  std::optional<int> request_image_max_dim;
};

void validate(const BackendSpec& spec);

struct QueryContext {
  std::string video_id;
  int frame_index = 0;
  PromptKind kind = PromptKind::SingleFrame;
};

/// A vision-language model endpoint. Implementations must tolerate concurrent queries.
class Backend {
 public:
  virtual ~Backend() = default;
  /// `images` is [test] or [reference, test].
  virtual std::string query(const std::string& prompt, std::span<const std::filesystem::path> images,
                            const QueryContext& ctx) = 0;
  virtual std::string id() const = 0;
};

/// Frame-level ground truth keyed by (video_id, frame_index).
class TruthTable {
 public:
  TruthTable() = default;
  explicit TruthTable(const std::vector<TruthRow>& rows);

  void set(const std::string& video_id, int frame_index, FrameLabel label);
  std::optional<FrameLabel> find(const std::string& video_id, int frame_index) const;
  std::size_t size() const noexcept { return rows_.size(); }
  /// Labels of one video in frame order (frames 1..n, stopping at the first gap).
  std::vector<FrameLabel> sequence(const std::string& video_id) const;

 private:
  std::map<std::pair<std::string, int>, FrameLabel> rows_;
};

class SimulatedBackend final : public Backend {
 public:
  SimulatedBackend(SimulatedSpec spec, std::shared_ptr<const TruthTable> truth);
  std::string query(const std::string& prompt, std::span<const std::filesystem::path> images,
                    const QueryContext& ctx) override;
  std::string id() const override;

  /// The verdict drawn for a frame; a pure function of (seed, video_id, frame_index, truth).
  bool draw(const std::string& video_id, int frame_index, FrameLabel truth) const;

 private:
  SimulatedSpec spec_;
  std::shared_ptr<const TruthTable> truth_;
};

class ReplayBackend final : public Backend {
 public:
  /// With an inner backend, misses are forwarded and recorded into the cache.
  ReplayBackend(ReplaySpec spec, std::unique_ptr<Backend> inner = nullptr);
  std::string query(const std::string& prompt, std::span<const std::filesystem::path> images,
                    const QueryContext& ctx) override;
  std::string id() const override;

  static std::string request_digest(const std::string& prompt, std::span<const std::filesystem::path> images,
                                    const QueryContext& ctx);
  std::filesystem::path cache_file(const std::string& digest) const;
  std::filesystem::path misses_file() const;
  void store(const std::string& digest, const std::string& raw_response) const;

 private:
  ReplaySpec spec_;
  std::unique_ptr<Backend> inner_;
};

struct EncodedImage {
  std::string mime;
  std::string base64;
};

/// Reads an image, downscaling (aspect preserved) when its longer side exceeds max_dim.
EncodedImage encode_image(const std::filesystem::path& path, std::optional<int> max_dim);

/// OpenAI-compatible chat-completions body: one user message, text part then image parts in order.
json build_chat_request(const std::string& model, const std::string& prompt, std::span<const EncodedImage> images);

/// Text content of choices[0].message; throws BadResponse otherwise.
std::string extract_chat_content(const json& response);

class HttpChatBackend final : public Backend {
 public:
  explicit HttpChatBackend(HttpChatSpec spec, std::optional<int> image_max_dim = std::nullopt);
  std::string query(const std::string& prompt, std::span<const std::filesystem::path> images,
                    const QueryContext& ctx) override;
  std::string id() const override;

  /// Number of HTTP attempts made by the most recent query (for diagnostics/tests).
  int last_attempts() const noexcept { return last_attempts_.load(); }

 private:
  HttpChatSpec spec_;
  std::optional<int> image_max_dim_;
  std::string api_key_;
  std::atomic<int> last_attempts_{0};
};

/// HTTP client and image library versions, for run metadata.
std::string library_versions();

/// Builds the backend described by `spec`. Simulated needs `truth`.
std::unique_ptr<Backend> make_backend(const BackendSpec& spec, std::shared_ptr<const TruthTable> truth = nullptr,
                                      std::unique_ptr<Backend> replay_inner = nullptr);

}  // namespace resp::backend
