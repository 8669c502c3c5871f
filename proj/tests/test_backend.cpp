#include <doctest.h>

#include <httplib.h>

#include <cstdlib>
#include <mutex>
#include <thread>

#include <opencv2/imgcodecs.hpp>

#include "resp/backend.hpp"
#include "resp/rng.hpp"
#include "resp/io.hpp"
#include "resp/prompting.hpp"
#include "support.hpp"

using namespace resp;
using namespace resp::backend;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<TruthTable> truth_for(const std::string& vid, int n, FrameLabel label) {
  auto t = std::make_shared<TruthTable>();
  for (int i = 1; i <= n; ++i) t->set(vid, i, label);
  return t;
}

bool verdict(Backend& b, const std::string& vid, int t) {
  return prompting::parse_verdict(b.query("p", {}, {vid, t, PromptKind::SingleFrame})).glitch_detected;
}

// Local chat-completions endpoint; replies are scripted per request.
class FakeServer {
 public:
  FakeServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      bodies.push_back(req.body);
      auth = req.get_header_value("Authorization");
      const int status = statuses.empty() ? 200 : statuses.front();
      if (!statuses.empty()) statuses.erase(statuses.begin());
      res.status = status;
      const json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", R"({"reasoning":"r","glitch_detected":true})"}}}}}}};
      res.set_content(status == 200 ? reply.dump() : "oops", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::vector<std::string> bodies;
  std::vector<int> statuses;
  std::string auth;

 private:
  httplib::Server server_;
  std::thread thread_;
  std::mutex mu_;
  int port_ = 0;
};

std::vector<uchar> base64_decode(const std::string& in) {
  static const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::vector<uchar> out;
  unsigned buf = 0;
  int bits = 0;
  for (char c : in) {
    if (c == '=') break;
    buf = (buf << 6) | static_cast<unsigned>(alphabet.find(c));
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<uchar>((buf >> bits) & 0xff));
    }
  }
  return out;
}

HttpChatSpec http_spec(const std::string& endpoint) {
  HttpChatSpec s;
  s.endpoint_url = endpoint;
  s.model_name = "test-model";
  s.api_key_env_var = "RESP_TEST_API_KEY";
  s.timeout_s = 5;
  s.max_retries = 2;
  s.backoff_initial_s = 0.01;
  return s;
}

}  // namespace

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(validate({SimulatedSpec{1.5, 0, 0}, {}}), Error);
  CHECK_THROWS_AS(validate({SimulatedSpec{0.5, -0.1, 0}, {}}), Error);
  CHECK_NOTHROW(validate({SimulatedSpec{0.5, 0.5, 0}, {}}));
  CHECK_THROWS_AS(validate({ReplaySpec{}, {}}), Error);
  CHECK_THROWS_AS(validate({SimulatedSpec{}, 0}), Error);
}

TEST_CASE("simulated backend") {
  SUBCASE("degenerate rates reproduce the truth") {
    auto truth = std::make_shared<TruthTable>();
    rng::CounterRng g(rng::derive_key(3, {}));
    for (int i = 1; i <= 500; ++i) truth->set("v", i, label_from_bool(g.below(2)));
    SimulatedBackend b({1.0, 0.0, 11}, truth);
    for (int i = 1; i <= 500; ++i) CHECK(verdict(b, "v", i) == is_glitchy(*truth->find("v", i)));
  }
  SUBCASE("empirical rates within 0.01") {
    SimulatedBackend glitchy({0.76, 0.2956, 7}, truth_for("g", 10000, FrameLabel::Glitchy));
    SimulatedBackend clean({0.76, 0.2956, 7}, truth_for("c", 10000, FrameLabel::Clean));
    int pos_g = 0, pos_c = 0;
    for (int i = 1; i <= 10000; ++i) {
      pos_g += verdict(glitchy, "g", i);
      pos_c += verdict(clean, "c", i);
    }
    CHECK(std::abs(pos_g / 10000.0 - 0.76) <= 0.01);
    CHECK(std::abs(pos_c / 10000.0 - 0.2956) <= 0.01);
  }
  SUBCASE("outputs are independent of call order and prompt") {
    auto truth = std::make_shared<TruthTable>();
    for (const char* v : {"a", "b", "c"})
      for (int i = 1; i <= 40; ++i) truth->set(v, i, label_from_bool(i % 3 == 0));
    SimulatedBackend b({0.6, 0.3, 42}, truth);
    std::map<std::pair<std::string, int>, std::string> forward;
    for (const char* v : {"a", "b", "c"})
      for (int i = 1; i <= 40; ++i) forward[{v, i}] = b.query("x", {}, {v, i, PromptKind::SingleFrame});
    for (const char* v : {"c", "a", "b"})
      for (int i = 40; i >= 1; --i) CHECK(b.query("other", {}, {v, i, PromptKind::PairCleanRef}) == forward[{v, i}]);
    SimulatedBackend other_seed({0.6, 0.3, 43}, truth);
    int differ = 0;
    for (const char* v : {"a", "b", "c"})
      for (int i = 1; i <= 40; ++i) differ += other_seed.query("x", {}, {v, i, PromptKind::SingleFrame}) != forward[{v, i}];
    CHECK(differ > 0);
  }
  SUBCASE("missing truth") {
    SimulatedBackend b({0.5, 0.5, 1}, truth_for("v", 2, FrameLabel::Clean));
    try {
      b.query("p", {}, {"v", 3, PromptKind::SingleFrame});
      FAIL("expected TruthMissing");
    } catch (const Error& e) {
      CHECK(e.code() == "TruthMissing");
    }
    CHECK_THROWS_AS(make_backend({SimulatedSpec{}, {}}), Error);
  }
  SUBCASE("concurrent queries agree with sequential ones") {
    auto truth = truth_for("v", 2000, FrameLabel::Glitchy);
    SimulatedBackend b({0.5, 0.5, 9}, truth);
    std::vector<std::string> seq(2000), par(2000);
    for (int i = 0; i < 2000; ++i) seq[i] = b.query("p", {}, {"v", i + 1, PromptKind::SingleFrame});
    std::vector<std::thread> ts;
    for (int w = 0; w < 4; ++w)
      ts.emplace_back([&, w] {
        for (int i = w; i < 2000; i += 4) par[i] = b.query("p", {}, {"v", i + 1, PromptKind::SingleFrame});
      });
    for (auto& t : ts) t.join();
    CHECK(seq == par);
  }
}

TEST_CASE("truth table sequences") {
  TruthTable t({{"v", 1, FrameLabel::Clean}, {"v", 2, FrameLabel::Glitchy}, {"v", 4, FrameLabel::Clean}});
  CHECK(t.sequence("v") == std::vector<FrameLabel>{FrameLabel::Clean, FrameLabel::Glitchy});
  CHECK(t.sequence("w").empty());
  CHECK_FALSE(t.find("v", 3));
}

TEST_CASE("replay backend") {
  testing::TempDir dir;
  const auto img = dir / "a.png";
  io::write_text_atomic(img, "pixels");
  const std::vector<fs::path> images{img};
  const QueryContext ctx{"v", 2, PromptKind::SingleFrame};

  SUBCASE("strict miss on an empty cache") {
    ReplayBackend b({dir / "cache", true});
    try {
      b.query("p", images, ctx);
      FAIL("expected CacheMiss");
    } catch (const Error& e) {
      CHECK(e.code() == "CacheMiss");
    }
    const auto misses = io::read_jsonl<json>(b.misses_file());
    REQUIRE(misses.size() == 1);
    CHECK(misses[0].at("request_digest") == ReplayBackend::request_digest("p", images, ctx));
    CHECK(misses[0].at("frame_index") == 2);
  }
  SUBCASE("lenient miss returns an empty response") {
    ReplayBackend b({dir / "cache", false});
    CHECK(b.query("p", images, ctx).empty());
  }
  SUBCASE("record through an inner backend, then replay") {
    auto truth = truth_for("v", 3, FrameLabel::Glitchy);
    {
      ReplayBackend rec({dir / "cache", true}, std::make_unique<SimulatedBackend>(SimulatedSpec{1, 0, 1}, truth));
      CHECK(rec.id() == "replay+" + SimulatedBackend({1, 0, 1}, truth).id());
      rec.query("p", images, ctx);
    }
    const auto digest = ReplayBackend::request_digest("p", images, ctx);
    const auto entry = json::parse(io::read_text(dir / "cache" / (digest + ".json")));
    CHECK(entry.at("request_digest") == digest);
    CHECK(entry.contains("timestamp"));
    ReplayBackend replay({dir / "cache", true});
    CHECK(prompting::parse_verdict(replay.query("p", images, ctx)).glitch_detected);
  }
  SUBCASE("digest depends on context, prompt and image bytes") {
    const auto d = ReplayBackend::request_digest("p", images, ctx);
    CHECK(d.size() == 64);
    CHECK(ReplayBackend::request_digest("q", images, ctx) != d);
    CHECK(ReplayBackend::request_digest("p", images, {"v", 3, PromptKind::SingleFrame}) != d);
    CHECK(ReplayBackend::request_digest("p", images, {"v", 2, PromptKind::PairCleanRef}) != d);
    io::write_text_atomic(img, "pixels2");
    CHECK(ReplayBackend::request_digest("p", images, ctx) != d);
  }
}

TEST_CASE("chat request layout") {
  const std::vector<EncodedImage> imgs{{"image/png", "UkVG"}, {"image/png", "VEVTVA=="}};
  const auto req = build_chat_request("m", "hello", imgs);
  CHECK(req.at("model") == "m");
  const auto& content = req.at("messages").at(0).at("content");
  REQUIRE(content.size() == 3);
  CHECK(content[0].at("text") == "hello");
  CHECK(content[1].at("image_url").at("url") == "data:image/png;base64,UkVG");
  CHECK(content[2].at("image_url").at("url") == "data:image/png;base64,VEVTVA==");
  CHECK(extract_chat_content(json::parse(R"({"choices":[{"message":{"content":"x"}}]})")) == "x");
  CHECK_THROWS_AS(extract_chat_content(json::parse(R"({"error":"nope"})")), Error);
}

TEST_CASE("http chat backend against a local server") {
  testing::TempDir dir;
  const auto ref = dir / "ref.png", test = dir / "test.png";
  cv::imwrite(ref.string(), cv::Mat(40, 80, CV_8UC3, cv::Scalar(10, 20, 30)));
  cv::imwrite(test.string(), cv::Mat(40, 80, CV_8UC3, cv::Scalar(200, 100, 0)));
  const std::vector<fs::path> pair{ref, test};
  const QueryContext ctx{"v", 2, PromptKind::PairCleanRef};

  ::unsetenv("RESP_TEST_API_KEY");
  CHECK_THROWS_WITH_AS(HttpChatBackend(http_spec("http://127.0.0.1:1")), doctest::Contains("AuthMissing"), Error);
  ::setenv("RESP_TEST_API_KEY", "sk-test", 1);

  SUBCASE("reference image precedes test image") {
    FakeServer server;
    HttpChatBackend b(http_spec(server.endpoint()));
    CHECK(prompting::parse_verdict(b.query("prompt", pair, ctx)).glitch_detected);
    REQUIRE(server.bodies.size() == 1);
    CHECK(server.auth == "Bearer sk-test");
    const auto body = json::parse(server.bodies[0]);
    const auto& content = body.at("messages").at(0).at("content");
    CHECK(content[1].at("image_url").at("url") == "data:image/png;base64," + io::base64_encode(io::read_text(ref)));
    CHECK(content[2].at("image_url").at("url") == "data:image/png;base64," + io::base64_encode(io::read_text(test)));
  }
  SUBCASE("retries identical bodies on 5xx and 429") {
    FakeServer server;
    server.statuses = {500, 429};
    HttpChatBackend b(http_spec(server.endpoint()));
    CHECK(prompting::parse_verdict(b.query("prompt", pair, ctx)).parse_status == ParseStatus::Ok);
    CHECK(b.last_attempts() == 3);
    REQUIRE(server.bodies.size() == 3);
    CHECK(server.bodies[0] == server.bodies[2]);
  }
  SUBCASE("gives up after max_retries") {
    FakeServer server;
    server.statuses = {503, 503, 503, 503};
    HttpChatBackend b(http_spec(server.endpoint()));
    CHECK_THROWS_WITH_AS(b.query("prompt", pair, ctx), doctest::Contains("TransportExhausted"), Error);
    CHECK(server.bodies.size() == 3);
  }
  SUBCASE("client errors are not retried") {
    FakeServer server;
    server.statuses = {400};
    HttpChatBackend b(http_spec(server.endpoint()));
    CHECK_THROWS_WITH_AS(b.query("prompt", pair, ctx), doctest::Contains("HttpError"), Error);
    CHECK(server.bodies.size() == 1);
  }
  SUBCASE("unreachable endpoint") {
    auto spec = http_spec("http://127.0.0.1:1");
    spec.max_retries = 1;
    HttpChatBackend b(spec);
    CHECK_THROWS_WITH_AS(b.query("prompt", pair, ctx), doctest::Contains("TransportExhausted"), Error);
  }
  SUBCASE("downscaling keeps aspect ratio") {
    const auto small = encode_image(test, 20);
    CHECK(small.mime == "image/png");
    const cv::Mat decoded = cv::imdecode(base64_decode(small.base64), cv::IMREAD_UNCHANGED);
    CHECK(decoded.cols == 20);
    CHECK(decoded.rows == 10);
    CHECK(encode_image(test, 200).base64 == io::base64_encode(io::read_text(test)));
    CHECK(encode_image(test, std::nullopt).base64 == io::base64_encode(io::read_text(test)));
    CHECK_THROWS_AS(encode_image(dir / "missing.png", std::nullopt), Error);
  }
}
