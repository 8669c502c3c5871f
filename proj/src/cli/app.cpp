#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <csignal>
#include <ctime>
#include <iostream>

#include <Eigen/Core>
#include <openssl/crypto.h>

#include "options.hpp"
#include "resp/io.hpp"

#ifndef RESP_VERSION
#define RESP_VERSION "0.0.0"
#endif

namespace resp::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json versions() {
  return json{{"resp", RESP_VERSION},
              {"compiler", __VERSION__},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                    "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
              {"cli11", CLI11_VERSION},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"openssl", OpenSSL_version(OPENSSL_VERSION)},
              {"backend_libraries", backend::library_versions()}};
}

/// Secrets are referenced by environment-variable name (--api-key-env); no other value may
/// interpolate the environment.
void reject_interpolation(const fs::path& config) {
  if (config.empty() || !fs::exists(config)) return;
  const auto text = io::read_text(config);
  if (text.find("${") != std::string::npos)
    throw Error(ErrorKind::Config, "InvalidConfig",
                config.string() + ": environment interpolation is only available for secrets; name the variable with api-key-env");
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, end};
}

template <typename T>
CLI::Option* opt(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  auto* o = app->add_option(name, value, help)->capture_default_str();
  if constexpr (std::is_floating_point_v<T>) o->default_str(shortest(value));
  return o;
}

/// Every long option of `app` with its effective value(s); flags carry "true"/"false".
std::vector<std::pair<std::string, std::vector<std::string>>> resolved(const CLI::App* app) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  for (const CLI::Option* o : app->get_options()) {
    if (o->get_lnames().empty()) continue;
    const auto& name = o->get_lnames().front();
    if (name == "help" || name == "version" || name == "config") continue;
    std::vector<std::string> values;
    if (o->get_expected_max() == 0) {
      values.push_back(o->count() > 0 ? "true" : "false");
    } else if (o->count() > 0) {
      values = o->results();
    } else {
      std::string d = o->get_default_str();
      if (d.size() >= 2 && (d.front() == '[' || d.front() == '{')) {
        d = d.substr(1, d.size() - 2);
        std::size_t start = 0;
        while (!d.empty() && start <= d.size()) {
          const auto comma = d.find(',', start);
          values.push_back(d.substr(start, comma - start));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
      } else if (!d.empty()) {
        values.push_back(d);
      }
    }
    out.emplace_back(name, std::move(values));
  }
  return out;
}

/// Argument vector reproducing the parsed command with every option spelled out.
std::vector<std::string> effective_argv(const CLI::App& app, const CLI::App* sub) {
  std::vector<std::string> argv;
  auto append = [&](const CLI::App* a) {
    for (const auto& [name, values] : resolved(a)) {
      if (values.size() == 1 && (values[0] == "true" || values[0] == "false") &&
          a->get_option("--" + name)->get_expected_max() == 0) {
        if (values[0] == "true") argv.push_back("--" + name);
        continue;
      }
      for (const auto& v : values) {
        argv.push_back("--" + name);
        argv.push_back(v);
      }
    }
  };
  append(&app);
  argv.push_back(sub->get_name());
  append(sub);
  return argv;
}

std::string effective_ini(const CLI::App& app, const CLI::App* sub) {
  std::string out;
  auto append = [&](const CLI::App* a) {
    for (const auto& [name, values] : resolved(a)) {
      if (values.empty()) continue;
      if (values.size() == 1) {
        out += name + "=" + json(values[0]).dump() + "\n";
      } else {
        out += name + "=" + json(values).dump() + "\n";
      }
    }
  };
  append(&app);
  out += "\n[" + sub->get_name() + "]\n";
  append(sub);
  return out;
}

struct Parsed {
  GlobalOptions g;
  SimulateOptions sim;
  ExtractOptions ext;
  PredictOptions pred;
  TrainOptions train;
  AggregateOptions agg;
  EvaluateOptions ev;
  CompareOptions cmp;
  fs::path rerun_meta;
};

void build(CLI::App& app, Parsed& p) {
  app.set_config("--config", "", "INI or TOML config file; keys mirror the long option names, subcommand keys go in [subcommand] sections");
  app.set_version_flag("--version", RESP_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  auto& g = p.g;
  opt(&app, "--output-dir,-o", g.output_dir, "Run output directory (manifests/, logs/, models/, reports/, runmeta/)");
  opt(&app, "--dataset", g.dataset, "Dataset manifest JSONL (default <output-dir>/dataset.jsonl)");
  opt(&app, "--truth", g.truth, "Frame truth JSONL (default <output-dir>/truth.jsonl)");
  opt(&app, "--workers,-j", g.workers, "Concurrent videos")->check(CLI::PositiveNumber);
  opt(&app, "--seeds", g.seeds, "Run seeds (train split, CV folds); one run per seed")->delimiter(',');
  opt(&app, "--train-glitchy", g.train_glitchy, "Glitchy videos in each training split")->check(CLI::NonNegativeNumber);
  opt(&app, "--train-clean", g.train_clean, "Clean videos in each training split")->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet,-q", g.quiet, "No progress lines on stderr");

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic corpus: dataset manifest, frame truth and placeholder keyframe manifests");
  auto& s = p.sim;
  opt(sim, "--n-glitchy", s.n_glitchy, "Glitchy videos")->check(CLI::NonNegativeNumber);
  opt(sim, "--n-clean", s.n_clean, "Glitch-free videos")->check(CLI::NonNegativeNumber);
  opt(sim, "--min-frames", s.pattern.min_frames, "Shortest video, frames");
  opt(sim, "--max-frames", s.pattern.max_frames, "Longest video, frames");
  opt(sim, "--onset", s.pattern.onset_fraction, "Glitch onset as a fraction of the video length");
  opt(sim, "--tail-min", s.pattern.tail_min, "Shortest clean tail, frames");
  opt(sim, "--tail-max", s.pattern.tail_max, "Longest clean tail, frames");
  opt(sim, "--onset-jitter", s.pattern.onset_jitter, "Onset jitter bound, frames");
  opt(sim, "--fps", s.pattern.fps, "Frame rate for placeholder timestamps");
  opt(sim, "--pattern-seed", s.pattern.seed, "Corpus seed");
  opt(sim, "--glitch-type", s.glitch_type, "Force one glitch type (default: round-robin over the five types)");

  auto* ext = app.add_subcommand("extract", "Extract keyframes with the external decoder and write manifests");
  auto& e = p.ext;
  opt(ext, "--video", e.videos, "Video files (default: paths from the dataset manifest)");
  opt(ext, "--mode", e.mode, "iframes or fps")->check(CLI::IsMember({"iframes", "fps"}));
  opt(ext, "--fps", e.fps, "Sampling rate for --mode fps");
  opt(ext, "--format", e.format, "png or jpeg")->check(CLI::IsMember({"png", "jpeg"}));
  opt(ext, "--quality", e.quality, "JPEG quality 1..100");
  opt(ext, "--decoder", e.decoder, "Decoder binary (default $RESP_FFMPEG, then ffmpeg on PATH)");
  opt(ext, "--frames-dir", e.frames_dir, "Image output directory (default <output-dir>/frames)");

  auto* pred = app.add_subcommand("predict", "Run reference-guided sequential prompting; resumable per video");
  auto& r = p.pred;
  opt(pred, "--setting", r.setting, "Setting name, used in output file names")->required();
  opt(pred, "--backend", r.backend, "simulated, replay or http")->check(CLI::IsMember({"simulated", "replay", "http"}));
  opt(pred, "--tpr", r.tpr, "Simulated: P(glitchy verdict | glitchy frame)");
  opt(pred, "--fpr", r.fpr, "Simulated: P(glitchy verdict | clean frame)");
  opt(pred, "--sim-seed", r.sim_seed, "Simulated: draw seed");
  opt(pred, "--cache-dir", r.cache_dir, "Replay: response cache directory");
  app.get_subcommand("predict")->add_flag("--replay-lenient", r.replay_lenient, "Replay: return an empty response on a miss instead of failing");
  app.get_subcommand("predict")->add_flag("--replay-record", r.replay_record, "Replay: forward misses to the HTTP backend and cache them");
  opt(pred, "--endpoint", r.endpoint, "HTTP: OpenAI-compatible base URL");
  opt(pred, "--model", r.model, "HTTP: model name");
  opt(pred, "--api-key-env", r.api_key_env, "HTTP: environment variable holding the API key");
  opt(pred, "--timeout", r.timeout_s, "HTTP: request timeout, seconds");
  opt(pred, "--max-retries", r.max_retries, "HTTP: retries on transport errors, 429 and 5xx");
  opt(pred, "--backoff", r.backoff_s, "HTTP: initial retry backoff, seconds (doubles per retry)");
  opt(pred, "--image-max-dim", r.image_max_dim, "Downscale request images whose longer side exceeds this (0: no limit)");
  opt(pred, "--policy", r.policy, "noref, last-clean, previous, random or manual");
  opt(pred, "--policy-seed", r.policy_seed, "RandomFrame seed");
  opt(pred, "--pairs", r.pairs, "ManualPairs table JSONL {video_id, frame_index, reference_path}");
  opt(pred, "--categories", r.categories, "Category set: refglitch5 or realworld9");
  opt(pred, "--default-on-fail", r.default_on_fail, "Label for unparseable responses: clean or glitchy");

  auto* train = app.add_subcommand("train", "Train the logistic-regression aggregator, one model per seed");
  auto& t = p.train;
  opt(train, "--setting", t.setting, "Setting whose prediction log is used")->required();
  opt(train, "--C", t.C, "Inverse regularization strength");
  opt(train, "--k-folds", t.k_folds, "Stratified CV folds for threshold selection");
  opt(train, "--max-iter", t.max_iter, "Solver iteration limit");
  opt(train, "--tol", t.tol, "Gradient max-norm tolerance");
  train->add_flag("--exclude-failed", t.exclude_failed, "Drop frames whose response failed to parse from the label sequences");

  auto* agg = app.add_subcommand("aggregate", "Turn frame labels into video verdicts");
  auto& a = p.agg;
  opt(agg, "--setting", a.setting, "Setting whose prediction log is used")->required();
  opt(agg, "--aggregator", a.aggregator, "lr or count_gt_<k>");
  opt(agg, "--model", a.model, "Model card to use instead of the per-seed models");
  agg->add_flag("--exclude-failed", a.exclude_failed, "Drop frames whose response failed to parse from the label sequences");

  auto* ev = app.add_subcommand("evaluate", "Score predictions or verdicts against ground truth");
  auto& v = p.ev;
  opt(ev, "--setting", v.setting, "Setting to evaluate");
  opt(ev, "--level", v.level, "frame or video")->check(CLI::IsMember({"frame", "video"}));
  opt(ev, "--aggregator", v.aggregator, "Video level: lr or count_gt_<k>");
  ev->add_flag("--holdout", v.holdout, "Video level: score only videos outside each seed's training split");
  ev->add_flag("--per-category", v.per_category, "Also report per glitch type (each type with all glitch-free items)");
  opt(ev, "--runs", v.runs, "Expected number of seeds (0: any)");
  opt(ev, "--log", v.log, "Frame level: prediction log to score (default logs/<setting>.jsonl)");
  opt(ev, "--verdicts", v.verdicts, "Video level: verdict file to score");
  ev->add_flag("--include-failed", v.include_failed, "Frame level: keep frames whose response failed to parse");

  auto* cmp = app.add_subcommand("compare", "Paired t-test between two settings over matched seeds");
  auto& c = p.cmp;
  opt(cmp, "--setting-a", c.setting_a, "First setting")->required();
  opt(cmp, "--setting-b", c.setting_b, "Second setting")->required();
  opt(cmp, "--aggregator", c.aggregator, "lr or count_gt_<k>");
  opt(cmp, "--metric", c.metric, "accuracy, f1, precision, recall or both (accuracy and f1)");
  opt(cmp, "--runs", c.runs, "Expected number of seeds (0: any)");

  auto* rerun = app.add_subcommand("rerun", "Re-execute the run recorded in a run-metadata file");
  rerun->add_option("runmeta", p.rerun_meta, "runmeta/*.json file")->required()->check(CLI::ExistingFile);
}

int execute(const std::vector<std::string>& args, int depth);

int dispatch(CLI::App& app, Parsed& p, const std::vector<std::string>& args, int depth) {
  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (name == "rerun") {
    if (depth > 0) throw Error(ErrorKind::Config, "InvalidConfig", "rerun cannot be nested");
    const auto meta = json::parse(io::read_text(p.rerun_meta));
    const auto argv = meta.at("effective_argv").get<std::vector<std::string>>();
    const fs::path cwd = meta.at("cwd").get<std::string>();
    const auto previous = fs::current_path();
    fs::current_path(cwd);
    const int rc = execute(argv, depth + 1);
    fs::current_path(previous);
    return rc;
  }

  if (auto* config = app.get_config_ptr(); config && config->count() > 0)
    for (const auto& file : config->results()) reject_interpolation(file);
  const auto started = utc_now();
  RunStats stats;
  int code = kExitOk;
  std::string error;
  try {
    if (name == "simulate") cmd_simulate(p.g, p.sim, stats);
    else if (name == "extract") cmd_extract(p.g, p.ext, stats);
    else if (name == "predict") cmd_predict(p.g, p.pred, stats);
    else if (name == "train") cmd_train(p.g, p.train, stats);
    else if (name == "aggregate") cmd_aggregate(p.g, p.agg, stats);
    else if (name == "evaluate") cmd_evaluate(p.g, p.ev, stats);
    else if (name == "compare") cmd_compare(p.g, p.cmp, stats);
  } catch (const Error& e) {
    code = e.code() == "Cancelled" ? kExitCancelled : exit_code(e.kind());
    error = e.what();
  }

  // Every option resolved, so the run can be repeated from this file alone.
  const std::string effective = effective_ini(app, sub);
  std::string setting;
  if (name == "predict") setting = p.pred.setting;
  else if (name == "train") setting = p.train.setting;
  else if (name == "aggregate") setting = p.agg.setting;
  else if (name == "evaluate") setting = p.ev.setting;
  else if (name == "compare") setting = p.cmp.setting_a + "__vs__" + p.cmp.setting_b;
  json meta{{"command", name},
            {"argv", args},
            {"cwd", fs::current_path().string()},
            {"effective_argv", effective_argv(app, sub)},
            {"effective_config", effective},
            {"config_digest", io::sha256_hex(effective)},
            {"started_at", started},
            {"finished_at", utc_now()},
            {"exit_code", code},
            {"error", error.empty() ? json(nullptr) : json(error)},
            {"backend_calls", stats.backend_calls.load()},
            {"outputs", stats.outputs},
            {"versions", versions()}};
  try {
    const auto path = p.g.layout().runmeta() / (name + (setting.empty() ? "" : "." + setting) + ".json");
    io::write_text_atomic(path, meta.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "resp: could not write run metadata: " << e.what() << '\n';
  }
  if (!error.empty()) std::cerr << "resp: error: " << error << '\n';
  return code;
}

int execute(const std::vector<std::string>& args, int depth) {
  CLI::App app{"resp: reference-guided sequential prompting for gameplay glitch detection", "resp"};
  Parsed p;
  build(app, p);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  try {
    return dispatch(app, p, args, depth);
  } catch (const Error& e) {
    std::cerr << "resp: error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "resp: internal error: " << e.what() << '\n';
    return kExitInvariant;
  }
}

extern "C" void on_signal(int) { g_cancel.store(true); }

}  // namespace

int run(const std::vector<std::string>& args) { return execute(args, 0); }

int run(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  return run(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace resp::cli
