#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "resp/backend.hpp"
#include "resp/io.hpp"

namespace resp::backend {

namespace fs = std::filesystem;

namespace {

std::string mime_for(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/png";
}

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::Config, "InvalidConfig", "endpoint needs a scheme: " + endpoint);
  auto path_start = endpoint.find('/', scheme_end + 3);
  Url u;
  u.origin = endpoint.substr(0, path_start);
  u.path = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
  static constexpr std::string_view suffix = "/chat/completions";
  if (u.path.size() < suffix.size() || u.path.compare(u.path.size() - suffix.size(), suffix.size(), suffix) != 0)
    u.path += suffix;
  return u;
}

}  // namespace

EncodedImage encode_image(const fs::path& path, std::optional<int> max_dim) {
  if (!fs::exists(path)) throw Error(ErrorKind::Input, "MissingAsset", path.string());
  const std::string mime = mime_for(path);
  if (max_dim) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (img.empty()) throw Error(ErrorKind::Input, "BadImage", path.string());
    const int longest = std::max(img.cols, img.rows);
    if (longest > *max_dim) {
      const double scale = static_cast<double>(*max_dim) / longest;
      cv::Size size(std::max(1, static_cast<int>(std::lround(img.cols * scale))),
                    std::max(1, static_cast<int>(std::lround(img.rows * scale))));
      cv::Mat resized;
      cv::resize(img, resized, size, 0, 0, cv::INTER_AREA);
      std::vector<uchar> buf;
      const std::string ext = mime == "image/jpeg" ? ".jpg" : ".png";
      if (!cv::imencode(ext, resized, buf)) throw Error(ErrorKind::Input, "BadImage", path.string());
      return {mime == "image/jpeg" ? mime : "image/png",
              io::base64_encode(std::string_view(reinterpret_cast<const char*>(buf.data()), buf.size()))};
    }
  }
  return {mime, io::base64_encode(io::read_text(path))};
}

json build_chat_request(const std::string& model, const std::string& prompt, std::span<const EncodedImage> images) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", prompt}});
  for (const auto& img : images)
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:" + img.mime + ";base64," + img.base64}}}});
  return json{{"model", model}, {"messages", json::array({json{{"role", "user"}, {"content", content}}})}};
}

std::string extract_chat_content(const json& response) {
  try {
    const auto& content = response.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    if (content.is_array()) {
      std::string text;
      for (const auto& part : content)
        if (part.value("type", "") == "text") text += part.value("text", "");
      return text;
    }
  } catch (const json::exception&) {
  }
  throw Error(ErrorKind::Backend, "BadResponse", response.dump().substr(0, 300));
}

HttpChatBackend::HttpChatBackend(HttpChatSpec spec, std::optional<int> image_max_dim)
    : spec_(std::move(spec)), image_max_dim_(image_max_dim) {
  const char* key = std::getenv(spec_.api_key_env_var.c_str());
  if (!key || !*key) throw Error(ErrorKind::Backend, "AuthMissing", "environment variable " + spec_.api_key_env_var + " is not set");
  api_key_ = key;
}

std::string HttpChatBackend::id() const { return "http:" + spec_.model_name; }

std::string library_versions() {
  return std::string("cpp-httplib ") + CPPHTTPLIB_VERSION + "; opencv " + CV_VERSION;
}

std::string HttpChatBackend::query(const std::string& prompt, std::span<const fs::path> images,
                                   const QueryContext& ctx) {
  std::vector<EncodedImage> encoded;
  for (const auto& img : images) encoded.push_back(encode_image(img, image_max_dim_));
  const std::string body = build_chat_request(spec_.model_name, prompt, encoded).dump();
  const Url url = split_endpoint(spec_.endpoint_url);

  const auto timeout = std::chrono::duration<double>(spec_.timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

  std::string last_error;
  double backoff = spec_.backoff_initial_s;
  for (int attempt = 0; attempt <= spec_.max_retries; ++attempt) {
    last_attempts_ = attempt + 1;
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2;
    }
    httplib::Client client(url.origin);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw Error(ErrorKind::Backend, "HttpError",
                  ctx.video_id + " frame " + std::to_string(ctx.frame_index) + ": HTTP " + std::to_string(res->status) +
                      " " + res->body.substr(0, 300));
    auto parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw Error(ErrorKind::Backend, "BadResponse", res->body.substr(0, 300));
    return extract_chat_content(parsed);
  }
  throw Error(ErrorKind::Backend, "TransportExhausted",
              ctx.video_id + " frame " + std::to_string(ctx.frame_index) + ": " + last_error);
}

}  // namespace resp::backend
