#include <doctest.h>

#include "resp/io.hpp"
#include "resp/rng.hpp"
#include "resp/sequencer.hpp"
#include "resp/synth.hpp"
#include "support.hpp"

using namespace resp;
using namespace resp::sequencer;
using backend::SimulatedBackend;
using backend::TruthTable;

namespace {

const auto C = FrameLabel::Clean;
const auto G = FrameLabel::Glitchy;

Keyframe kf(int t) { return {"v", t, (t - 1) * 0.2, "/frames/v_" + std::to_string(t) + ".png"}; }

ReferencePool pool_of(const std::vector<FrameLabel>& labels) {
  ReferencePool p;
  for (std::size_t i = 0; i < labels.size(); ++i) p.append(kf(static_cast<int>(i) + 1), labels[i]);
  return p;
}

std::shared_ptr<TruthTable> truth_of(const std::string& vid, const std::vector<FrameLabel>& labels) {
  auto t = std::make_shared<TruthTable>();
  for (std::size_t i = 0; i < labels.size(); ++i) t->set(vid, static_cast<int>(i) + 1, labels[i]);
  return t;
}

const prompting::CategorySet& cats() { return prompting::builtin_categories("refglitch5"); }

// Records every query it forwards.
class Spy final : public backend::Backend {
 public:
  explicit Spy(backend::Backend& inner) : inner_(inner) {}
  std::string query(const std::string& prompt, std::span<const std::filesystem::path> images,
                    const backend::QueryContext& ctx) override {
    calls.push_back({prompt, {images.begin(), images.end()}, ctx.frame_index});
    return inner_.query(prompt, images, ctx);
  }
  std::string id() const override { return inner_.id(); }

  struct Call {
    std::string prompt;
    std::vector<std::filesystem::path> images;
    int t;
  };
  std::vector<Call> calls;

 private:
  backend::Backend& inner_;
};

class Failing final : public backend::Backend {
 public:
  std::string query(const std::string&, std::span<const std::filesystem::path>, const backend::QueryContext& ctx) override {
    if (ctx.frame_index == 2) throw Error(ErrorKind::Backend, "TransportExhausted", "boom");
    return prompting::canonical_verdict_json("", false);
  }
  std::string id() const override { return "failing"; }
};

}  // namespace

TEST_CASE("select_reference examples") {
  const auto pool = pool_of({C, G, C, G});
  auto r = select_reference(pool, ReferencePolicy::last_clean_frame(), "v", 5);
  REQUIRE(r);
  CHECK(r->index == 3);
  CHECK(r->label == C);
  CHECK(r->image_path == kf(3).image_path);

  r = select_reference(pool_of({G, G}), ReferencePolicy::last_clean_frame(), "v", 3);
  REQUIRE(r);
  CHECK(r->index == 2);
  CHECK(r->label == G);

  CHECK(select_reference(pool, ReferencePolicy::previous_frame(), "v", 5)->index == 4);
  CHECK_FALSE(select_reference(pool, ReferencePolicy::no_ref(), "v", 5));

  const ReferencePool empty;
  auto pairs = std::make_shared<PairTable>();
  for (const auto& p : {ReferencePolicy::no_ref(), ReferencePolicy::last_clean_frame(), ReferencePolicy::previous_frame(),
                        ReferencePolicy::random_frame(3), ReferencePolicy::manual_pairs(pairs)})
    CHECK_FALSE(select_reference(empty, p, "v", 1));

  CHECK_THROWS_AS(select_reference(pool, ReferencePolicy::previous_frame(), "v", 4), Error);
}

TEST_CASE("random policy is uniform over earlier frames and keyed per (seed, video, t)") {
  const auto pool = pool_of({C, C, G, C, C, G, C, C, C});
  std::map<int, int> counts;
  for (std::uint64_t seed = 0; seed < 9000; ++seed) {
    const auto r = select_reference(pool, ReferencePolicy::random_frame(seed), "v", 10);
    REQUIRE(r);
    REQUIRE(r->index >= 1);
    REQUIRE(r->index <= 9);
    ++counts[r->index];
  }
  for (const auto& [idx, n] : counts) CHECK(std::abs(n - 1000) < 120);
  CHECK(select_reference(pool, ReferencePolicy::random_frame(5), "v", 10)->index ==
        select_reference(pool, ReferencePolicy::random_frame(5), "v", 10)->index);
}

TEST_CASE("last-clean law over random label sequences") {
  rng::CounterRng g(rng::derive_key(17, {}));
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = static_cast<int>(g.between(1, 12));
    std::vector<FrameLabel> labels;
    for (int i = 0; i < n; ++i) labels.push_back(label_from_bool(g.uniform01() < 0.6));
    const auto r = select_reference(pool_of(labels), ReferencePolicy::last_clean_frame(), "v", n + 1);
    REQUIRE(r);
    int expected = n;
    for (int i = n; i >= 1; --i)
      if (labels[static_cast<std::size_t>(i - 1)] == C) {
        expected = i;
        break;
      }
    const bool any_clean = std::find(labels.begin(), labels.end(), C) != labels.end();
    CHECK(r->index == expected);
    CHECK((r->label == C) == any_clean);
  }
}

TEST_CASE("pool is append-only in frame order") {
  ReferencePool p;
  p.append(kf(1), C);
  CHECK_THROWS_AS(p.append(kf(3), C), Error);
  CHECK(p.size() == 1);
}

TEST_CASE("hand-traced three-frame video") {
  testing::TempDir dir;
  const auto manifest = synth::placeholder_manifest("v", 3, 5.0, dir.path());
  SimulatedBackend sim({1.0, 0.0, 0}, truth_of("v", {C, G, C}));
  Spy spy(sim);
  const auto out = process_video(manifest, ReferencePolicy::last_clean_frame(), spy, cats());
  REQUIRE(out.size() == 3);
  CHECK(out[0].prompt_kind == PromptKind::SingleFrame);
  CHECK_FALSE(out[0].reference_index);
  CHECK(out[1].prompt_kind == PromptKind::PairCleanRef);
  CHECK(out[1].reference_index == 1);
  CHECK(out[2].prompt_kind == PromptKind::PairCleanRef);
  CHECK(out[2].reference_index == 1);
  CHECK(out[0].label == C);
  CHECK(out[1].label == G);
  CHECK(out[2].label == C);
  CHECK(validate_prediction_log(out).empty());

  REQUIRE(spy.calls.size() == 3);
  CHECK(spy.calls[0].images == std::vector<std::filesystem::path>{manifest.frames[0].image_path});
  CHECK(spy.calls[2].images ==
        std::vector<std::filesystem::path>{manifest.frames[0].image_path, manifest.frames[2].image_path});
  CHECK(spy.calls[0].prompt == prompting::render_prompt(PromptKind::SingleFrame, cats()));
  CHECK(spy.calls[1].prompt == prompting::render_prompt(PromptKind::PairCleanRef, cats()));
}

TEST_CASE("glitchy-reference prompt when nothing clean came before") {
  testing::TempDir dir;
  const auto manifest = synth::placeholder_manifest("v", 3, 5.0, dir.path());
  SimulatedBackend sim({1.0, 0.0, 0}, truth_of("v", {G, G, C}));
  const auto out = process_video(manifest, ReferencePolicy::last_clean_frame(), sim, cats());
  CHECK(out[1].prompt_kind == PromptKind::PairGlitchyRef);
  CHECK(out[1].reference_index == 1);
  CHECK(out[2].prompt_kind == PromptKind::PairGlitchyRef);
  CHECK(out[2].reference_index == 2);
  CHECK(validate_prediction_log(out).empty());
}

TEST_CASE("NoRef prompts every frame alone") {
  testing::TempDir dir;
  const auto manifest = synth::placeholder_manifest("v", 12, 5.0, dir.path());
  SimulatedBackend sim({0.5, 0.5, 1}, truth_of("v", std::vector<FrameLabel>(12, G)));
  for (const auto& p : process_video(manifest, ReferencePolicy::no_ref(), sim, cats())) {
    CHECK(p.prompt_kind == PromptKind::SingleFrame);
    CHECK_FALSE(p.reference_index);
    CHECK_FALSE(p.reference_label);
  }
}

TEST_CASE("manual pairs use curated clean references") {
  testing::TempDir dir;
  const auto manifest = synth::placeholder_manifest("v", 4, 5.0, dir.path());
  io::write_text_atomic(dir / "pairs.jsonl",
                        "{\"video_id\":\"v\",\"frame_index\":2,\"reference_path\":\"/refs/a.png\"}\n"
                        "{\"video_id\":\"v\",\"frame_index\":3,\"reference_path\":\"/refs/b.png\"}\n"
                        "{\"video_id\":\"v\",\"frame_index\":4,\"reference_path\":\"/refs/c.png\"}\n");
  auto table = std::make_shared<PairTable>(load_pair_table(dir / "pairs.jsonl"));
  CHECK(table->size() == 3);
  SimulatedBackend sim({1.0, 0.0, 0}, truth_of("v", {G, G, G, G}));
  Spy spy(sim);
  const auto out = process_video(manifest, ReferencePolicy::manual_pairs(table), spy, cats());
  for (int t = 2; t <= 4; ++t) {
    const auto& p = out[static_cast<std::size_t>(t - 1)];
    CHECK(p.prompt_kind == PromptKind::PairCleanRef);
    CHECK(p.reference_index == 0);
    CHECK(p.reference_path == *table->find("v", t));
    CHECK(spy.calls[static_cast<std::size_t>(t - 1)].images.front() == *table->find("v", t));
  }
  CHECK(validate_prediction_log(out).empty());

  auto partial = std::make_shared<PairTable>();
  partial->set("v", 2, "/refs/a.png");
  CHECK_THROWS_AS(process_video(manifest, ReferencePolicy::manual_pairs(partial), sim, cats()), Error);
}

TEST_CASE("causality, pool size and determinism on random videos") {
  testing::TempDir dir;
  rng::CounterRng g(rng::derive_key(23, {}));
  const ReferencePolicy policies[] = {ReferencePolicy::last_clean_frame(), ReferencePolicy::previous_frame(),
                                      ReferencePolicy::random_frame(4), ReferencePolicy::no_ref()};
  for (int v = 0; v < 200; ++v) {
    const std::string vid = "v" + std::to_string(v);
    const int T = static_cast<int>(g.between(1, 40));
    std::vector<FrameLabel> truth;
    for (int i = 0; i < T; ++i) truth.push_back(label_from_bool(g.below(3) == 0));
    const auto manifest = synth::placeholder_manifest(vid, T, 5.0, dir.path());
    SimulatedBackend sim({0.7, 0.2, static_cast<std::uint64_t>(v)}, truth_of(vid, truth));
    const auto& policy = policies[v % 4];
    int pool_size = 0;
    SequencerConfig cfg;
    cfg.on_prediction = [&](const FramePrediction& p) {
      CHECK(p.frame_index == ++pool_size);
    };
    const auto out = process_video(manifest, policy, sim, cats(), cfg);
    REQUIRE(static_cast<int>(out.size()) == T);
    CHECK(pool_size == T);
    CHECK(validate_prediction_log(out).empty());
    for (const auto& p : out) {
      if (p.reference_index) {
        CHECK(*p.reference_index < p.frame_index);
        CHECK(p.reference_label == out[static_cast<std::size_t>(*p.reference_index - 1)].label);
      }
    }
    CHECK(process_video(manifest, policy, sim, cats()) == out);
  }
}

TEST_CASE("resume continues from a prefix with the same result") {
  testing::TempDir dir;
  const auto manifest = synth::placeholder_manifest("v", 10, 5.0, dir.path());
  std::vector<FrameLabel> truth{C, G, G, C, G, C, C, G, C, G};
  SimulatedBackend sim({0.8, 0.3, 5}, truth_of("v", truth));
  const auto full = process_video(manifest, ReferencePolicy::last_clean_frame(), sim, cats());
  Spy spy(sim);
  SequencerConfig cfg;
  cfg.resume_from.assign(full.begin(), full.begin() + 4);
  CHECK(process_video(manifest, ReferencePolicy::last_clean_frame(), spy, cats(), cfg) == full);
  CHECK(spy.calls.size() == 6);
  CHECK(spy.calls.front().t == 5);

  cfg.resume_from = {full[0], full[2]};
  CHECK_THROWS_AS(process_video(manifest, ReferencePolicy::last_clean_frame(), sim, cats(), cfg), Error);
}

TEST_CASE("backend errors are annotated with video and frame") {
  testing::TempDir dir;
  const auto manifest = synth::placeholder_manifest("clip7", 4, 5.0, dir.path());
  Failing failing;
  try {
    process_video(manifest, ReferencePolicy::previous_frame(), failing, cats());
    FAIL("expected TransportExhausted");
  } catch (const Error& e) {
    CHECK(e.code() == "TransportExhausted");
    CHECK(e.kind() == ErrorKind::Backend);
    CHECK(std::string(e.what()).find("video clip7 t=2") != std::string::npos);
  }
}

TEST_CASE("unparseable responses take the configured default and still enter the pool") {
  class Mute final : public backend::Backend {
   public:
    std::string query(const std::string&, std::span<const std::filesystem::path>, const backend::QueryContext&) override {
      return "no comment";
    }
    std::string id() const override { return "mute"; }
  } mute;
  testing::TempDir dir;
  const auto manifest = synth::placeholder_manifest("v", 3, 5.0, dir.path());
  SequencerConfig cfg;
  cfg.default_on_fail = G;
  const auto out = process_video(manifest, ReferencePolicy::last_clean_frame(), mute, cats(), cfg);
  for (const auto& p : out) {
    CHECK(p.parse_status == ParseStatus::Failed);
    CHECK(p.label == G);
  }
  CHECK(out[2].prompt_kind == PromptKind::PairGlitchyRef);
  CHECK(out[2].reference_index == 2);
}
