#include "resp/eval.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace resp::eval {

ConfusionCounts confusion(std::span<const FrameLabel> pred, std::span<const FrameLabel> truth) {
  if (pred.size() != truth.size())
    throw Error(ErrorKind::Input, "LengthMismatch",
                std::to_string(pred.size()) + " predictions vs " + std::to_string(truth.size()) + " truth labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = is_glitchy(pred[i]), t = is_glitchy(truth[i]);
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

ConfusionCounts confusion(const std::map<std::string, FrameLabel>& pred, const std::map<std::string, FrameLabel>& truth) {
  std::vector<FrameLabel> p, t;
  for (const auto& [id, label] : pred) {
    auto it = truth.find(id);
    if (it == truth.end()) throw Error(ErrorKind::Input, "MissingTruth", id);
    p.push_back(label);
    t.push_back(it->second);
  }
  return confusion(p, t);
}

std::string_view to_string(Level l) { return l == Level::Frame ? "frame" : "video"; }

Level parse_level(std::string_view s) {
  if (s == "frame") return Level::Frame;
  if (s == "video") return Level::Video;
  throw Error(ErrorKind::Config, "InvalidConfig", "unknown level '" + std::string(s) + "'");
}

MetricsReport metrics(const ConfusionCounts& c, const std::string& setting_id, Level level) {
  if (c.total() <= 0) throw Error(ErrorKind::Input, "EmptyEvaluation", "no items to evaluate" + (setting_id.empty() ? "" : " for " + setting_id));
  MetricsReport r;
  r.setting_id = setting_id;
  r.level = level;
  r.n = c.total();
  r.counts = c;
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(r.n);
  r.precision_undefined = c.tp + c.fp == 0;
  r.recall_undefined = c.tp + c.fn == 0;
  r.precision = r.precision_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  r.recall = r.recall_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

namespace {

json metrics_body(const MetricsReport& r) {
  json flags = json::array();
  if (r.precision_undefined) flags.push_back("precision_undefined");
  if (r.recall_undefined) flags.push_back("recall_undefined");
  return json{{"n", r.n},
              {"accuracy", r.accuracy},
              {"f1", r.f1},
              {"precision", r.precision},
              {"recall", r.recall},
              {"confusion", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}}},
              {"flags", flags}};
}

void csv_row(std::ostringstream& os, const MetricsReport& r, const std::string& group) {
  os.precision(17);
  os << r.setting_id << ',' << to_string(r.level) << ',' << group << ',' << r.n << ',' << r.accuracy << ',' << r.f1 << ','
     << r.precision << ',' << r.recall << ',' << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.fn << ','
     << r.counts.tn << '\n';
}

}  // namespace

json report_json(const MetricsReport& r) {
  json j = metrics_body(r);
  j["setting_id"] = r.setting_id;
  j["level"] = to_string(r.level);
  json cats = json::object();
  for (const auto& [name, sub] : r.per_category) cats[name] = metrics_body(sub);
  j["per_category"] = cats;
  return j;
}

std::string report_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "setting_id,level,group,n,accuracy,f1,precision,recall,tp,fp,fn,tn\n";
  csv_row(os, r, "all");
  for (const auto& [name, sub] : r.per_category) csv_row(os, sub, name);
  return os.str();
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0 && b > 0)) throw Error(ErrorKind::Input, "InvalidArgument", "incomplete_beta needs a, b > 0");
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  if (x > (a + 1) / (a + b + 2)) return 1.0 - incomplete_beta(b, a, 1.0 - x);

  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  // Modified Lentz evaluation of the continued fraction.
  constexpr double tiny = 1e-300, eps = 1e-16;
  double c = 1.0, d = 1.0 - (a + b) * x / (a + 1);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::exp(log_front) * h / a;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0)) throw Error(ErrorKind::Input, "InvalidArgument", "df must be > 0");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2, 0.5, df / (df + t * t));
}

PairedTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::Input, "LengthMismatch", "paired samples differ in length");
  const auto n = static_cast<int>(a.size());
  if (n < 2) throw Error(ErrorKind::Input, "TooFewRuns", "paired t-test needs n >= 2");

  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));

  PairedTestResult r;
  r.n_runs = n;
  r.df = n - 1;
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
    r.degenerate = true;
    return r;
  }
  r.t_stat = sd == 0.0 ? std::copysign(std::numeric_limits<double>::infinity(), mean) : mean / (sd / std::sqrt(n));
  r.p_two_sided = student_t_two_sided_p(r.t_stat, r.df);
  r.significant_at_0_05 = r.p_two_sided < 0.05;
  return r;
}

json comparison_json(const std::string& setting_a, const std::string& setting_b, const std::string& metric,
                     const PairedTestResult& r, std::span<const double> a, std::span<const double> b) {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return json{{"setting_a", setting_a},
              {"setting_b", setting_b},
              {"metric", metric},
              {"t", finite_or_null(r.t_stat)},
              {"df", r.df},
              {"p", r.p_two_sided},
              {"significant", r.significant_at_0_05},
              {"n_runs", r.n_runs},
              {"degenerate", r.degenerate},
              {"runs_a", std::vector<double>(a.begin(), a.end())},
              {"runs_b", std::vector<double>(b.begin(), b.end())}};
}

std::optional<std::string> category_of(const VideoRecord& r) {
  if (r.glitch_type) return std::string(to_string(*r.glitch_type));
  if (r.video_label == FrameLabel::Clean) return std::string("glitch_free");
  return std::nullopt;
}

namespace {

struct Item {
  std::optional<std::string> category;
  FrameLabel pred, truth;
};

MetricsReport assemble(const std::vector<Item>& items, const std::string& setting_id, Level level, bool per_category) {
  std::vector<FrameLabel> p, t;
  for (const auto& it : items) {
    p.push_back(it.pred);
    t.push_back(it.truth);
  }
  MetricsReport r = metrics(confusion(p, t), setting_id, level);
  if (!per_category) return r;

  std::set<std::string> types;
  for (const auto& it : items)
    if (it.category && *it.category != "glitch_free") types.insert(*it.category);

  auto group = [&](auto&& include) {
    std::vector<FrameLabel> gp, gt;
    for (const auto& it : items)
      if (it.category && include(*it.category)) {
        gp.push_back(it.pred);
        gt.push_back(it.truth);
      }
    return confusion(gp, gt);
  };
  if (auto c = group([](const std::string& cat) { return cat == "glitch_free"; }); c.total() > 0)
    r.per_category["glitch_free"] = metrics(c, setting_id, level);
  for (const auto& type : types)
    r.per_category[type] =
        metrics(group([&](const std::string& cat) { return cat == type || cat == "glitch_free"; }), setting_id, level);
  return r;
}

std::map<std::string, const VideoRecord*> index_records(const std::vector<VideoRecord>& records) {
  std::map<std::string, const VideoRecord*> out;
  for (const auto& r : records)
    if (!out.emplace(r.video_id, &r).second) throw Error(ErrorKind::Input, "DuplicateVideoId", r.video_id);
  return out;
}

}  // namespace

MetricsReport evaluate_frames(const std::vector<FramePrediction>& log, const std::vector<TruthRow>& truth,
                              const std::vector<VideoRecord>& records, const std::string& setting_id,
                              const EvalOptions& opt) {
  std::map<std::pair<std::string, int>, FrameLabel> truth_map;
  for (const auto& row : truth) truth_map[{row.video_id, row.frame_index}] = row.truth_label;
  const auto by_video = index_records(records);

  std::vector<Item> items;
  for (const auto& p : log) {
    if (opt.exclude_failed && p.parse_status == ParseStatus::Failed) continue;
    auto it = truth_map.find({p.video_id, p.frame_index});
    if (it == truth_map.end()) {
      if (opt.require_truth)
        throw Error(ErrorKind::Input, "MissingTruth", p.video_id + " frame " + std::to_string(p.frame_index));
      continue;
    }
    std::optional<std::string> cat;
    if (auto r = by_video.find(p.video_id); r != by_video.end()) cat = category_of(*r->second);
    items.push_back({cat, p.label, it->second});
  }
  return assemble(items, setting_id, Level::Frame, opt.per_category);
}

MetricsReport evaluate_videos(const std::vector<VideoVerdict>& verdicts, const std::vector<VideoRecord>& records,
                              const std::string& setting_id, const EvalOptions& opt) {
  const auto by_video = index_records(records);
  std::vector<Item> items;
  std::set<std::string> seen;
  for (const auto& v : verdicts) {
    if (!seen.insert(v.video_id).second) throw Error(ErrorKind::Input, "DuplicateVideoId", "verdict for " + v.video_id);
    auto r = by_video.find(v.video_id);
    if (r == by_video.end() || !r->second->video_label) {
      if (opt.require_truth) throw Error(ErrorKind::Input, "MissingTruth", v.video_id);
      continue;
    }
    items.push_back({category_of(*r->second), v.label, *r->second->video_label});
  }
  return assemble(items, setting_id, Level::Video, opt.per_category);
}

const std::vector<double>& RunSummary::metric(std::string_view name) const {
  if (name == "accuracy") return accuracy;
  if (name == "f1") return f1;
  if (name == "precision") return precision;
  if (name == "recall") return recall;
  throw Error(ErrorKind::Config, "InvalidConfig", "unknown metric '" + std::string(name) + "'");
}

RunSummary summarize_runs(const std::vector<MetricsReport>& reports, int expected_runs) {
  if (expected_runs > 0 && static_cast<int>(reports.size()) != expected_runs)
    throw Error(ErrorKind::Config, "RunCountMismatch",
                "expected " + std::to_string(expected_runs) + " runs, got " + std::to_string(reports.size()));
  if (reports.empty()) throw Error(ErrorKind::Input, "EmptyEvaluation", "no runs to summarize");
  RunSummary s;
  for (const auto& r : reports) {
    s.accuracy.push_back(r.accuracy);
    s.f1.push_back(r.f1);
    s.precision.push_back(r.precision);
    s.recall.push_back(r.recall);
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
  s.mean_accuracy = mean(s.accuracy);
  s.mean_f1 = mean(s.f1);
  s.mean_precision = mean(s.precision);
  s.mean_recall = mean(s.recall);
  return s;
}

}  // namespace resp::eval
