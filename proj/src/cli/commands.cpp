#include <algorithm>
#include <map>
#include <mutex>
#include <set>

#include "options.hpp"
#include "resp/aggregate/model.hpp"
#include "resp/aggregate/stats.hpp"
#include "resp/eval.hpp"
#include "resp/io.hpp"
#include "resp/keyframes.hpp"
#include "resp/parallel.hpp"
#include "resp/prompting.hpp"

namespace resp::cli {

namespace fs = std::filesystem;

namespace {

struct Cancelled : Error {
  Cancelled() : Error(ErrorKind::Invariant, "Cancelled", "interrupted") {}
};

void emit(RunStats& stats, const fs::path& path, const std::string& content) {
  io::write_text_atomic(path, content);
  stats.outputs.push_back(path.string());
}

std::vector<VideoRecord> load_records(const GlobalOptions& g) {
  auto records = io::read_jsonl<VideoRecord>(g.dataset_path());
  check_unique_video_ids(records);
  return records;
}

std::vector<FramePrediction> load_log(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Input, "FileNotFound", path.string() + " (run predict first)");
  return io::read_jsonl<FramePrediction>(path);
}

/// Frame labels per video, in frame order.
std::map<std::string, std::vector<FrameLabel>> sequences(const std::vector<FramePrediction>& log, bool exclude_failed) {
  std::map<std::string, std::vector<std::pair<int, FrameLabel>>> rows;
  for (const auto& p : log) {
    if (exclude_failed && p.parse_status == ParseStatus::Failed) continue;
    rows[p.video_id].emplace_back(p.frame_index, p.label);
  }
  std::map<std::string, std::vector<FrameLabel>> out;
  for (auto& [id, v] : rows) {
    std::sort(v.begin(), v.end());
    auto& seq = out[id];
    for (const auto& [t, l] : v) seq.push_back(l);
  }
  return out;
}

const std::vector<FrameLabel>& sequence_of(const std::map<std::string, std::vector<FrameLabel>>& seqs, const std::string& id) {
  auto it = seqs.find(id);
  if (it == seqs.end() || it->second.empty())
    throw Error(ErrorKind::Input, "MissingPredictions", "no frame predictions for video " + id);
  return it->second;
}

FrameLabel parse_label_name(const std::string& s) {
  if (s == "clean") return FrameLabel::Clean;
  if (s == "glitchy") return FrameLabel::Glitchy;
  throw Error(ErrorKind::Config, "InvalidConfig", "label must be clean or glitchy, got '" + s + "'");
}

/// Counts queries that reach the wrapped backend.
class CountingBackend final : public backend::Backend {
 public:
  CountingBackend(std::unique_ptr<backend::Backend> inner, std::atomic<long>& calls) : inner_(std::move(inner)), calls_(calls) {}
  std::string query(const std::string& prompt, std::span<const fs::path> images, const backend::QueryContext& ctx) override {
    ++calls_;
    return inner_->query(prompt, images, ctx);
  }
  std::string id() const override { return inner_->id(); }

 private:
  std::unique_ptr<backend::Backend> inner_;
  std::atomic<long>& calls_;
};

/// Runs fn per item; failures are collected so one bad video does not stop the others.
template <typename Fn>
void per_video(const GlobalOptions& g, const std::vector<std::string>& ids, Fn&& fn) {
  std::mutex mu;
  std::vector<std::pair<std::string, Error>> failures;
  parallel_for(ids.size(), g.workers, [&](std::size_t i) {
    if (g_cancel.load()) throw Cancelled();
    try {
      fn(ids[i]);
    } catch (const Cancelled&) {
      throw;
    } catch (const Error& e) {
      log_line(g, "failed " + ids[i] + ": " + e.what());
      std::lock_guard lock(mu);
      failures.emplace_back(ids[i], e);
    }
  });
  if (g_cancel.load()) throw Cancelled();
  if (!failures.empty()) {
    std::sort(failures.begin(), failures.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto& [id, first] = failures.front();
    throw Error(first.kind(), first.code(),
                std::to_string(failures.size()) + " of " + std::to_string(ids.size()) + " videos failed; first (" + id +
                    "): " + first.what());
  }
}

}  // namespace

void cmd_simulate(const GlobalOptions& g, const SimulateOptions& o, RunStats& stats) {
  synth::PatternSpec spec = o.pattern;
  if (!o.glitch_type.empty()) spec.glitch_type = parse_glitch_type(o.glitch_type);
  const auto corpus = synth::gen_corpus(o.n_glitchy, o.n_clean, spec, "frames");
  const auto layout = g.layout();
  emit(stats, g.dataset_path(), io::to_jsonl(corpus.records));
  emit(stats, g.truth_path(), io::to_jsonl(corpus.truth));
  for (const auto& m : corpus.manifests)
    keyframes::write_manifest(m, keyframes::manifest_path(layout.manifests(), m.video_id));
  stats.outputs.push_back(layout.manifests().string());
  log_line(g, "simulated " + std::to_string(corpus.records.size()) + " videos, " + std::to_string(corpus.truth.size()) +
                  " frames");
}

void cmd_extract(const GlobalOptions& g, const ExtractOptions& o, RunStats& stats) {
  keyframes::ExtractionConfig cfg;
  if (o.mode == "iframes") cfg.mode = ExtractionMode::iframes();
  else if (o.mode == "fps") {
    if (!(o.fps > 0)) throw Error(ErrorKind::Config, "InvalidConfig", "fps must be > 0");
    cfg.mode = ExtractionMode::fixed_fps(o.fps);
  } else throw Error(ErrorKind::Config, "InvalidConfig", "mode must be iframes or fps, got '" + o.mode + "'");
  if (o.format == "png") cfg.image_format = {keyframes::ImageFormat::Kind::Png};
  else if (o.format == "jpeg") cfg.image_format = {keyframes::ImageFormat::Kind::Jpeg, o.quality};
  else throw Error(ErrorKind::Config, "InvalidConfig", "format must be png or jpeg, got '" + o.format + "'");
  if (o.quality < 1 || o.quality > 100) throw Error(ErrorKind::Config, "InvalidConfig", "quality must be in 1..100");
  cfg.output_dir = o.frames_dir.empty() ? g.output_dir / "frames" : o.frames_dir;
  cfg.decoder_binary = o.decoder;
  keyframes::resolve_decoder(cfg.decoder_binary);

  std::map<std::string, fs::path> videos;
  if (!o.videos.empty()) {
    for (const auto& v : o.videos)
      if (!videos.emplace(keyframes::default_video_id(v), v).second)
        throw Error(ErrorKind::Input, "DuplicateVideoId", keyframes::default_video_id(v));
  } else {
    for (const auto& r : load_records(g)) videos.emplace(r.video_id, r.path);
  }
  std::vector<std::string> ids;
  for (const auto& [id, path] : videos) ids.push_back(id);

  const auto dir = g.layout().manifests();
  per_video(g, ids, [&](const std::string& id) {
    const auto m = keyframes::extract_keyframes(videos.at(id), cfg, id);
    keyframes::write_manifest(m, keyframes::manifest_path(dir, id));
    log_line(g, "extracted " + id + ": T=" + std::to_string(m.frames.size()));
  });
  stats.outputs.push_back(dir.string());
}

void cmd_predict(const GlobalOptions& g, const PredictOptions& o, RunStats& stats) {
  if (o.setting.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "--setting is required");
  auto spec = backend_spec(o);
  const auto policy = reference_policy(o);
  const auto& cats = prompting::builtin_categories(o.categories);
  sequencer::SequencerConfig base_cfg;
  base_cfg.default_on_fail = parse_label_name(o.default_on_fail);

  std::shared_ptr<const backend::TruthTable> truth;
  if (std::holds_alternative<backend::SimulatedSpec>(spec.kind))
    truth = std::make_shared<const backend::TruthTable>(io::read_jsonl<TruthRow>(g.truth_path()));
  std::unique_ptr<backend::Backend> inner;
  if (o.replay_record) {
    if (o.backend != "replay") throw Error(ErrorKind::Config, "InvalidConfig", "--replay-record needs --backend replay");
    backend::BackendSpec http{backend::HttpChatSpec{o.endpoint, o.model, o.api_key_env, o.timeout_s, o.max_retries, o.backoff_s},
                              spec.request_image_max_dim};
    backend::validate(http);
    inner = backend::make_backend(http);
  }
  CountingBackend backend(backend::make_backend(spec, truth, std::move(inner)), stats.backend_calls);

  const auto layout = g.layout();
  std::vector<std::string> ids;
  if (fs::exists(g.dataset_path())) {
    for (const auto& r : load_records(g)) ids.push_back(r.video_id);
  } else {
    for (const auto& e : fs::directory_iterator(layout.manifests())) {
      const auto name = e.path().filename().string();
      const std::string suffix = ".manifest.json";
      if (name.size() > suffix.size() && name.ends_with(suffix)) ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  fs::create_directories(layout.logs() / o.setting);

  std::atomic<long> skipped{0};
  per_video(g, ids, [&](const std::string& id) {
    const auto manifest = keyframes::load_manifest(keyframes::manifest_path(layout.manifests(), id));
    const auto log_path = layout.video_log(o.setting, id);
    auto cfg = base_cfg;
    if (fs::exists(log_path)) cfg.resume_from = io::read_jsonl<FramePrediction>(log_path);
    if (cfg.resume_from.size() >= manifest.frames.size()) {
      ++skipped;
      return;
    }
    cfg.on_prediction = [&](const FramePrediction& p) {
      io::append_line(log_path, json(p).dump());
      if (g_cancel.load()) throw Cancelled();
    };
    sequencer::process_video(manifest, policy, backend, cats, cfg);
  });

  std::string merged;
  std::vector<FramePrediction> all;
  for (const auto& id : ids) {
    auto rows = io::read_jsonl<FramePrediction>(layout.video_log(o.setting, id));
    all.insert(all.end(), rows.begin(), rows.end());
  }
  const auto violations = validate_prediction_log(all);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw Error(ErrorKind::Invariant, "InvalidLog",
                std::to_string(violations.size()) + " violations; first: " + v.video_id + " t=" + std::to_string(v.frame_index) +
                    ": " + v.message);
  }
  emit(stats, layout.merged_log(o.setting), io::to_jsonl(all));
  log_line(g, "predicted " + o.setting + ": " + std::to_string(ids.size()) + " videos (" + std::to_string(skipped.load()) +
                  " already complete), " + std::to_string(stats.backend_calls.load()) + " backend calls");
}

void cmd_train(const GlobalOptions& g, const TrainOptions& o, RunStats& stats) {
  if (o.setting.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "--setting is required");
  const auto layout = g.layout();
  const auto records = load_records(g);
  const auto seqs = sequences(load_log(layout.merged_log(o.setting)), o.exclude_failed);

  std::vector<aggregate::FeatureRow> rows;
  std::vector<aggregate::SequenceStats> all_stats;
  std::map<std::string, aggregate::FeatureVector> feats;
  for (const auto& r : records) {
    auto it = seqs.find(r.video_id);
    if (it == seqs.end() || it->second.empty()) continue;
    all_stats.push_back(aggregate::compute_stats(it->second));
    feats[r.video_id] = aggregate::features(all_stats.back());
    rows.push_back({r.video_id, feats[r.video_id], r.video_label});
  }
  emit(stats, layout.reports() / (o.setting + ".features.csv"), aggregate::feature_csv(rows));
  if (all_stats.size() >= 3) {
    const auto cf = aggregate::correlation_filter(all_stats);
    emit(stats, layout.reports() / (o.setting + ".correlation.json"),
         json{{"threshold", 0.9}, {"selected", cf.selected}, {"dropped", cf.dropped}, {"constant", cf.constant}}.dump(2) + "\n");
  }

  const aggregate::TrainParams base{o.C, o.max_iter, o.tol, o.k_folds, 0};
  std::vector<std::string> written(g.seeds.size());
  parallel_for(g.seeds.size(), g.workers, [&](std::size_t s) {
    const auto seed = g.seeds[s];
    const auto split = split_train_holdout(records, g.train_glitchy, g.train_clean, seed);
    std::map<std::string, FrameLabel> label_of;
    for (const auto& r : records)
      if (r.video_label) label_of[r.video_id] = *r.video_label;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(split.train.size()), aggregate::kFeatureCount);
    Eigen::VectorXi y(static_cast<Eigen::Index>(split.train.size()));
    for (std::size_t i = 0; i < split.train.size(); ++i) {
      const auto& id = split.train[i];
      X.row(static_cast<Eigen::Index>(i)) = aggregate::features(sequence_of(seqs, id)).transpose();
      y(static_cast<Eigen::Index>(i)) = is_glitchy(label_of.at(id));
    }
    auto params = base;
    params.seed = seed;
    const auto model = aggregate::train_aggregator(X, y, params);
    const auto card = layout.model_card(o.setting, seed);
    io::write_text_atomic(card, aggregate::model_card_text(model));
    auto split_path = card;
    split_path.replace_filename(o.setting + "__seed" + std::to_string(seed) + ".split.json");
    io::write_text_atomic(split_path, json{{"seed", seed}, {"train", split.train}, {"holdout", split.holdout}}.dump(2) + "\n");
    written[s] = card.string();
    log_line(g, "trained " + o.setting + " seed " + std::to_string(seed) + ": threshold " + std::to_string(model.threshold) +
                    ", cv F1 " + std::to_string(model.cv_f1) + (model.converged ? "" : " (not converged)"));
  });
  stats.outputs.insert(stats.outputs.end(), written.begin(), written.end());
}

void cmd_aggregate(const GlobalOptions& g, const AggregateOptions& o, RunStats& stats) {
  if (o.setting.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "--setting is required");
  const auto choice = parse_aggregator(o.aggregator);
  if (choice.kind == AggregatorChoice::Kind::Count && !o.model.empty())
    throw Error(ErrorKind::Config, "InvalidConfig", "--model applies to the lr aggregator only; select exactly one aggregator mode");
  const auto layout = g.layout();
  const auto seqs = sequences(load_log(layout.merged_log(o.setting)), o.exclude_failed);

  auto run_all = [&](auto&& verdict_for) {
    std::vector<VideoVerdict> out;
    for (const auto& [id, labels] : seqs)
      if (!labels.empty()) out.push_back(verdict_for(id, labels));
    return out;
  };

  if (choice.kind == AggregatorChoice::Kind::Count) {
    const aggregate::ThresholdRule rule{choice.k};
    emit(stats, layout.verdicts(o.setting, choice.id(), std::nullopt),
         io::to_jsonl(run_all([&](const std::string& id, const auto& l) { return aggregate::threshold_aggregate(id, l, rule); })));
  } else if (!o.model.empty()) {
    const auto model = aggregate::load_model_card(o.model);
    emit(stats, layout.verdicts(o.setting, "lr", std::nullopt),
         io::to_jsonl(run_all([&](const std::string& id, const auto& l) { return aggregate::predict_video(model, id, l); })));
  } else {
    for (auto seed : g.seeds) {
      const auto model = aggregate::load_model_card(layout.model_card(o.setting, seed));
      emit(stats, layout.verdicts(o.setting, "lr", seed),
           io::to_jsonl(run_all([&](const std::string& id, const auto& l) { return aggregate::predict_video(model, id, l); })));
    }
  }
  log_line(g, "aggregated " + o.setting + " with " + choice.id() + ": " + std::to_string(seqs.size()) + " videos");
}

void cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o, RunStats& stats) {
  const auto layout = g.layout();
  const auto level = eval::parse_level(o.level);
  eval::EvalOptions eopt;
  eopt.per_category = o.per_category;

  if (level == eval::Level::Frame) {
    if (o.setting.empty() && o.log.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "--setting or --log is required");
    const auto log_path = o.log.empty() ? layout.merged_log(o.setting) : o.log;
    const std::string setting = o.setting.empty() ? log_path.stem().string() : o.setting;
    const auto log = load_log(log_path);
    const auto truth = io::read_jsonl<TruthRow>(g.truth_path());
    std::vector<VideoRecord> records;
    if (fs::exists(g.dataset_path())) records = load_records(g);
    eopt.exclude_failed = !o.include_failed;
    const auto report = eval::evaluate_frames(log, truth, records, setting, eopt);
    emit(stats, layout.report(setting + ".frame"), eval::report_json(report).dump(2) + "\n");
    emit(stats, layout.reports() / (setting + ".frame.csv"), eval::report_csv(report));
    log_line(g, "frame-level " + setting + ": accuracy " + std::to_string(report.accuracy) + ", F1 " + std::to_string(report.f1));
    return;
  }

  if (o.setting.empty()) throw Error(ErrorKind::Config, "InvalidConfig", "--setting is required");
  const auto choice = parse_aggregator(o.aggregator);
  const auto records = load_records(g);
  const std::string stem = o.setting + "." + choice.id();

  if (!o.verdicts.empty()) {
    const auto report = eval::evaluate_videos(io::read_jsonl<VideoVerdict>(o.verdicts), records, o.setting, eopt);
    emit(stats, layout.report(stem), eval::report_json(report).dump(2) + "\n");
    emit(stats, layout.reports() / (stem + ".csv"), eval::report_csv(report));
    return;
  }

  std::vector<eval::MetricsReport> reports;
  for (auto seed : g.seeds) {
    auto path = layout.verdicts(o.setting, choice.id(), seed);
    if (!fs::exists(path)) path = layout.verdicts(o.setting, choice.id(), std::nullopt);
    auto verdicts = io::read_jsonl<VideoVerdict>(path);
    if (o.holdout) {
      const auto split = split_train_holdout(records, g.train_glitchy, g.train_clean, seed);
      const std::set<std::string> keep(split.holdout.begin(), split.holdout.end());
      std::erase_if(verdicts, [&](const VideoVerdict& v) { return !keep.contains(v.video_id); });
    }
    reports.push_back(eval::evaluate_videos(verdicts, records, o.setting, eopt));
    const std::string seed_stem = stem + ".seed" + std::to_string(seed);
    emit(stats, layout.report(seed_stem), eval::report_json(reports.back()).dump(2) + "\n");
    emit(stats, layout.reports() / (seed_stem + ".csv"), eval::report_csv(reports.back()));
  }
  const auto summary = eval::summarize_runs(reports, o.runs);
  json j{{"setting_id", o.setting},
         {"aggregator", choice.id()},
         {"level", "video"},
         {"holdout", o.holdout},
         {"seeds", g.seeds},
         {"runs", {{"accuracy", summary.accuracy}, {"f1", summary.f1}, {"precision", summary.precision}, {"recall", summary.recall}}},
         {"mean",
          {{"accuracy", summary.mean_accuracy}, {"f1", summary.mean_f1}, {"precision", summary.mean_precision}, {"recall", summary.mean_recall}}}};
  emit(stats, layout.report(stem + ".summary"), j.dump(2) + "\n");
  log_line(g, "video-level " + stem + ": mean accuracy " + std::to_string(summary.mean_accuracy) + ", mean F1 " +
                  std::to_string(summary.mean_f1) + " over " + std::to_string(reports.size()) + " runs");
}

void cmd_compare(const GlobalOptions& g, const CompareOptions& o, RunStats& stats) {
  if (o.setting_a.empty() || o.setting_b.empty())
    throw Error(ErrorKind::Config, "InvalidConfig", "--setting-a and --setting-b are required");
  if (o.runs > 0 && static_cast<int>(g.seeds.size()) != o.runs)
    throw Error(ErrorKind::Config, "RunCountMismatch",
                "expected " + std::to_string(o.runs) + " seeds, got " + std::to_string(g.seeds.size()));
  std::vector<std::string> metrics;
  if (o.metric == "both") metrics = {"accuracy", "f1"};
  else if (o.metric == "accuracy" || o.metric == "f1" || o.metric == "precision" || o.metric == "recall") metrics = {o.metric};
  else throw Error(ErrorKind::Config, "InvalidConfig", "metric must be accuracy, f1, precision, recall or both");

  const auto choice = parse_aggregator(o.aggregator);
  const auto layout = g.layout();
  auto runs_of = [&](const std::string& setting, const std::string& metric) {
    std::vector<double> v;
    for (auto seed : g.seeds) {
      const auto path = layout.report(setting + "." + choice.id() + ".seed" + std::to_string(seed));
      if (!fs::exists(path)) throw Error(ErrorKind::Input, "FileNotFound", path.string() + " (run evaluate first)");
      v.push_back(json::parse(io::read_text(path)).at(metric).get<double>());
    }
    return v;
  };

  std::string csv = "setting_a,setting_b,metric,t,df,p,significant\n";
  for (const auto& metric : metrics) {
    const auto a = runs_of(o.setting_a, metric), b = runs_of(o.setting_b, metric);
    const auto r = eval::paired_t_test(a, b);
    const auto j = eval::comparison_json(o.setting_a, o.setting_b, metric, r, a, b);
    emit(stats, layout.report("compare." + o.setting_a + "__vs__" + o.setting_b + "." + choice.id() + "." + metric), j.dump(2) + "\n");
    csv += o.setting_a + "," + o.setting_b + "," + metric + "," + j.at("t").dump() + "," + std::to_string(r.df) + "," +
           j.at("p").dump() + "," + (r.significant_at_0_05 ? "true" : "false") + "\n";
    log_line(g, "compare " + metric + ": t=" + j.at("t").dump() + " p=" + j.at("p").dump());
  }
  emit(stats, layout.reports() / ("compare." + o.setting_a + "__vs__" + o.setting_b + "." + choice.id() + ".csv"), csv);
}

}  // namespace resp::cli
