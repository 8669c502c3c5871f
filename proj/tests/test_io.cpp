#include <doctest.h>

#include <thread>

#include "resp/io.hpp"
#include "support.hpp"

using namespace resp;

TEST_CASE("sha256 and base64 match published vectors") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(io::base64_encode("") == "");
  CHECK(io::base64_encode("f") == "Zg==");
  CHECK(io::base64_encode("foobar") == "Zm9vYmFy");
}

TEST_CASE("atomic write replaces content and leaves no temp files") {
  testing::TempDir dir;
  const auto p = dir / "sub/out.txt";
  io::write_text_atomic(p, "one");
  io::write_text_atomic(p, "two");
  CHECK(io::read_text(p) == "two");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(p.parent_path())) ++entries;
  CHECK(entries == 1);
  CHECK(io::sha256_file_hex(p) == io::sha256_hex("two"));
}

TEST_CASE("concurrent appends keep lines whole") {
  testing::TempDir dir;
  const auto p = dir / "log.jsonl";
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&, t] {
      for (int i = 0; i < 200; ++i) io::append_line(p, json{{"t", t}, {"i", i}, {"pad", std::string(100, 'x')}}.dump());
    });
  for (auto& th : threads) th.join();
  const auto rows = io::read_jsonl<json>(p);
  CHECK(rows.size() == 1600);
}

TEST_CASE("read_jsonl reports the offending line") {
  testing::TempDir dir;
  const auto p = dir / "x.jsonl";
  io::write_text_atomic(p, "{\"video_id\":\"a\",\"frame_index\":1,\"truth_label\":true}\n\n{\"video_id\":\"b\"}\n");
  try {
    io::read_jsonl<TruthRow>(p);
    FAIL("expected SchemaViolation");
  } catch (const Error& e) {
    CHECK(e.code() == "SchemaViolation");
    CHECK(std::string(e.what()).find("x.jsonl:3") != std::string::npos);
  }
  CHECK_THROWS_AS(io::read_jsonl<TruthRow>(dir / "missing.jsonl"), Error);
}
