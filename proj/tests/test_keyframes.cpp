#include <doctest.h>

#include <cmath>
#include <sys/stat.h>

#include "resp/io.hpp"
#include "resp/keyframes.hpp"
#include "support.hpp"

using namespace resp;
using namespace resp::keyframes;
namespace fs = std::filesystem;

namespace {

// Shell stand-in for the decoder: prints a canned showinfo log and writes `frames` files
// following the output pattern (last argv element).
fs::path fake_decoder(const fs::path& dir, int frames, int exit_code = 0) {
  const auto p = dir / "fake-ffmpeg";
  std::string script = "#!/bin/sh\nfor last; do :; done\n";
  for (int i = 1; i <= frames; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%05d", i);
    script += "f=$(printf '%s' \"$last\" | sed 's/%05d/" + std::string(name) + "/'); : > \"$f\"\n";
    script += "echo '[Parsed_showinfo_1 @ 0x1] n:" + std::to_string(i - 1) + " pts:" + std::to_string(i * 100) +
              " pts_time:" + std::to_string((i - 1) * 0.5) + " duration:1' >&2\n";
  }
  script += "exit " + std::to_string(exit_code) + "\n";
  io::write_text_atomic(p, script);
  ::chmod(p.c_str(), 0755);
  return p;
}

KeyframeManifest sample_manifest(const fs::path& dir, int n) {
  KeyframeManifest m;
  m.video_id = "vid";
  m.mode = ExtractionMode::fixed_fps(5);
  m.source_video = "/videos/vid.mp4";
  m.decoder_argv = {"ffmpeg", "-i", "vid.mp4"};
  for (int i = 1; i <= n; ++i) m.frames.push_back({"vid", i, (i - 1) * 0.2, dir / ("vid_" + std::to_string(i) + ".png")});
  return m;
}

}  // namespace

TEST_CASE("showinfo parsing keeps emission order and ignores other lines") {
  const std::string log =
      "Input #0, mov\n"
      "[Parsed_showinfo_1 @ 0x55] n:   0 pts:      0 pts_time:0       duration:512\n"
      "[Parsed_showinfo_1 @ 0x55] config in time_base: 1/12800\n"
      "[Parsed_showinfo_1 @ 0x55] n:   1 pts:   6144 pts_time:0.48    duration:512\n"
      "[Parsed_showinfo_1 @ 0x55] n:   2 pts:  12288 pts_time:0.96    duration:512\n";
  const auto ts = parse_showinfo_timestamps(log);
  REQUIRE(ts.size() == 3);
  CHECK(ts[0] == 0.0);
  CHECK(ts[1] == doctest::Approx(0.48));
  CHECK(ts[2] == doctest::Approx(0.96));
}

TEST_CASE("decoder argv encodes mode and format") {
  ExtractionConfig cfg;
  cfg.output_dir = "/out";
  auto a = decoder_argv("/bin/ffmpeg", "v.mp4", "v", cfg);
  CHECK(std::find(a.begin(), a.end(), "select='eq(pict_type,I)',showinfo") != a.end());
  CHECK(a.back() == "/out/v_%05d.png");
  cfg.mode = ExtractionMode::fixed_fps(2.5);
  cfg.image_format = {ImageFormat::Kind::Jpeg, 100};
  a = decoder_argv("/bin/ffmpeg", "v.mp4", "50%", cfg);
  CHECK(std::find(a.begin(), a.end(), "fps=2.5,showinfo") != a.end());
  CHECK(std::find(a.begin(), a.end(), "-q:v") != a.end());
  CHECK(a.back() == "/out/50%%_%05d.jpg");
}

TEST_CASE("extraction with a stub decoder") {
  testing::TempDir dir;
  const auto video = dir / "clip.mp4";
  io::write_text_atomic(video, "not really a video");
  ExtractionConfig cfg;
  cfg.output_dir = dir / "frames";

  SUBCASE("frames and timestamps") {
    cfg.decoder_binary = fake_decoder(dir.path(), 4).string();
    const auto m = extract_keyframes(video, cfg);
    CHECK(m.video_id == "clip");
    REQUIRE(m.frames.size() == 4);
    for (int i = 0; i < 4; ++i) {
      CHECK(m.frames[i].index == i + 1);
      CHECK(m.frames[i].timestamp_s == doctest::Approx(i * 0.5));
      CHECK(fs::exists(m.frames[i].image_path));
    }
    CHECK(m.decoder_argv.front() == cfg.decoder_binary);
  }
  SUBCASE("stale frames from an earlier run are removed") {
    cfg.decoder_binary = fake_decoder(dir.path(), 6).string();
    extract_keyframes(video, cfg);
    cfg.decoder_binary = fake_decoder(dir.path(), 3).string();
    CHECK(extract_keyframes(video, cfg).frames.size() == 3);
  }
  SUBCASE("non-zero exit is DecodeFailed") {
    cfg.decoder_binary = fake_decoder(dir.path(), 1, 1).string();
    try {
      extract_keyframes(video, cfg);
      FAIL("expected DecodeFailed");
    } catch (const Error& e) {
      CHECK(e.code() == "DecodeFailed");
      CHECK(e.kind() == ErrorKind::Input);
    }
  }
  SUBCASE("zero frames is EmptyOutput") {
    cfg.decoder_binary = fake_decoder(dir.path(), 0).string();
    try {
      extract_keyframes(video, cfg);
      FAIL("expected EmptyOutput");
    } catch (const Error& e) {
      CHECK(e.code() == "EmptyOutput");
    }
  }
  SUBCASE("missing decoder") {
    cfg.decoder_binary = (dir / "nope").string();
    try {
      extract_keyframes(video, cfg);
      FAIL("expected DecoderNotFound");
    } catch (const Error& e) {
      CHECK(e.code() == "DecoderNotFound");
    }
    CHECK_THROWS_AS(resolve_decoder("definitely-not-a-decoder-binary"), Error);
  }
  SUBCASE("invalid rate") {
    cfg.mode = ExtractionMode::fixed_fps(0);
    CHECK_THROWS_AS(extract_keyframes(video, cfg), Error);
  }
}

TEST_CASE("manifest round-trip and validation") {
  testing::TempDir dir;
  const auto path = manifest_path(dir.path(), "vid");
  CHECK(path.filename() == "vid.manifest.json");
  auto m = sample_manifest(dir.path(), 5);
  write_manifest(m, path);
  CHECK(load_manifest(path) == m);

  SUBCASE("strict mode needs the images") {
    try {
      load_manifest(path, true);
      FAIL("expected MissingAsset");
    } catch (const Error& e) {
      CHECK(e.code() == "MissingAsset");
    }
    for (const auto& f : m.frames) io::write_text_atomic(f.image_path, "");
    CHECK_NOTHROW(load_manifest(path, true));
  }
  SUBCASE("non-increasing timestamps point at the frame line") {
    m.frames[3].timestamp_s = m.frames[2].timestamp_s;
    write_manifest(m, path);
    try {
      load_manifest(path);
      FAIL("expected SchemaViolation");
    } catch (const Error& e) {
      CHECK(e.code() == "SchemaViolation");
      // header occupies lines 1..6, frames start on line 7
      CHECK(std::string(e.what()).find(path.string() + ":10") != std::string::npos);
    }
  }
  SUBCASE("gap in indices") {
    m.frames[1].index = 3;
    write_manifest(m, path);
    CHECK_THROWS_AS(load_manifest(path), Error);
  }
  SUBCASE("empty frame list") {
    m.frames.clear();
    write_manifest(m, path);
    CHECK_THROWS_AS(load_manifest(path), Error);
  }
}

TEST_CASE("real decoder on the fixture clips") {
  const auto decoder = testing::find_decoder();
  if (decoder.empty()) {
    MESSAGE("no decoder available, skipping");
    return;
  }
  testing::TempDir dir;
  ExtractionConfig cfg;
  cfg.decoder_binary = decoder;

  SUBCASE("fixed fps on a 10 s clip") {
    cfg.mode = ExtractionMode::fixed_fps(5);
    cfg.output_dir = dir / "a";
    const auto m = extract_keyframes(testing::data_dir() / "clip_10s.mp4", cfg);
    CHECK(std::abs(static_cast<int>(m.frames.size()) - 50) <= 1);
    for (std::size_t i = 0; i < m.frames.size(); ++i) CHECK(std::abs(m.frames[i].timestamp_s - i / 5.0) <= 0.2 + 1e-9);

    cfg.output_dir = dir / "b";
    const auto again = extract_keyframes(testing::data_dir() / "clip_10s.mp4", cfg);
    REQUIRE(again.frames.size() == m.frames.size());
    for (std::size_t i = 0; i < m.frames.size(); ++i) {
      CHECK(again.frames[i].timestamp_s == m.frames[i].timestamp_s);
      CHECK(io::sha256_file_hex(again.frames[i].image_path) == io::sha256_file_hex(m.frames[i].image_path));
    }
  }
  SUBCASE("I-frames of a 2 s clip with GOP 12 at 25 fps") {
    cfg.output_dir = dir / "i";
    const auto m = extract_keyframes(testing::data_dir() / "clip_2s.mp4", cfg);
    REQUIRE(m.frames.size() == 5);
    for (std::size_t i = 0; i < m.frames.size(); ++i) CHECK(m.frames[i].timestamp_s == doctest::Approx(i * 0.48));
    write_manifest(m, manifest_path(dir.path(), m.video_id));
    CHECK_NOTHROW(load_manifest(manifest_path(dir.path(), m.video_id), true));
  }
  SUBCASE("empty input file") {
    io::write_text_atomic(dir / "empty.mp4", "");
    cfg.output_dir = dir / "e";
    try {
      extract_keyframes(dir / "empty.mp4", cfg);
      FAIL("expected DecodeFailed");
    } catch (const Error& e) {
      CHECK(e.code() == "DecodeFailed");
    }
  }
}
