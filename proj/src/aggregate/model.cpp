#include "resp/aggregate/model.hpp"

#include <charconv>

#include "resp/aggregate/logistic.hpp"
#include "resp/io.hpp"

namespace resp::aggregate {

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, end};
}

}  // namespace

bool AggregatorModel::operator==(const AggregatorModel& o) const {
  return feature_names == o.feature_names && scaler_means == o.scaler_means && scaler_stds == o.scaler_stds &&
         degenerate_features == o.degenerate_features && weights == o.weights && intercept == o.intercept &&
         threshold == o.threshold && params == o.params && iterations == o.iterations && converged == o.converged &&
         cv_f1 == o.cv_f1;
}

void to_json(json& j, const AggregatorModel& m) {
  j = json{{"format_version", kModelFormatVersion},
           {"aggregator_id", "lr"},
           {"feature_names", m.feature_names},
           {"scaler", {{"means", to_vec(m.scaler_means)}, {"stds", to_vec(m.scaler_stds)}, {"degenerate", m.degenerate_features}}},
           {"weights", to_vec(m.weights)},
           {"intercept", m.intercept},
           {"threshold", m.threshold},
           {"hyperparams",
            {{"C", m.params.C}, {"max_iter", m.params.max_iter}, {"tol", m.params.tol}, {"k_folds", m.params.k_folds}, {"seed", m.params.seed}}},
           {"training", {{"iterations", m.iterations}, {"converged", m.converged}, {"cv_f1", m.cv_f1}}}};
}

void from_json(const json& j, AggregatorModel& m) {
  const int version = j.at("format_version").get<int>();
  if (version != kModelFormatVersion)
    throw Error(ErrorKind::Input, "SchemaViolation", "unsupported model card format_version " + std::to_string(version));
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  const auto& s = j.at("scaler");
  m.scaler_means = from_vec(s.at("means").get<std::vector<double>>());
  m.scaler_stds = from_vec(s.at("stds").get<std::vector<double>>());
  m.degenerate_features = s.value("degenerate", std::vector<bool>(static_cast<std::size_t>(m.scaler_means.size()), false));
  m.weights = from_vec(j.at("weights").get<std::vector<double>>());
  m.intercept = j.at("intercept").get<double>();
  m.threshold = j.at("threshold").get<double>();
  const auto& h = j.at("hyperparams");
  m.params = {h.at("C").get<double>(), h.at("max_iter").get<int>(), h.at("tol").get<double>(), h.at("k_folds").get<int>(),
              h.at("seed").get<std::uint64_t>()};
  if (auto t = j.find("training"); t != j.end()) {
    m.iterations = t->value("iterations", 0);
    m.converged = t->value("converged", false);
    m.cv_f1 = t->value("cv_f1", 0.0);
  }

  const auto d = static_cast<Eigen::Index>(m.feature_names.size());
  if (m.scaler_means.size() != d || m.scaler_stds.size() != d || m.weights.size() != d ||
      m.degenerate_features.size() != m.feature_names.size())
    throw Error(ErrorKind::Input, "SchemaViolation", "model card vector lengths disagree with feature_names");
  if (!(m.scaler_stds.array() > 0).all()) throw Error(ErrorKind::Input, "SchemaViolation", "scaler std must be > 0");
  if (!(m.threshold > 0 && m.threshold < 1)) throw Error(ErrorKind::Input, "SchemaViolation", "threshold outside (0,1)");
}

std::string model_card_text(const AggregatorModel& m) { return json(m).dump(2) + "\n"; }

void write_model_card(const AggregatorModel& m, const std::filesystem::path& path) {
  io::write_text_atomic(path, model_card_text(m));
}

AggregatorModel load_model_card(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Input, "SchemaViolation", path.string() + ": " + e.what());
  }
  try {
    return j.get<AggregatorModel>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Input, "SchemaViolation", path.string() + ": " + e.what());
  }
}

AggregatorModel train_aggregator(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXi>& y,
                                 const TrainParams& params) {
  if (X.cols() != kFeatureCount)
    throw Error(ErrorKind::Input, "ShapeMismatch", "expected " + std::to_string(kFeatureCount) + " feature columns");
  const LrOptions<double> opt{params.C, params.max_iter, params.tol};

  const Eigen::VectorXd oof = cv_out_of_fold(X, y, params.k_folds, params.seed, opt);
  const auto choice = select_threshold(oof, y);

  const auto scaler = fit_scaler(X);
  const auto fit = train_lr(apply_scaler(X, scaler), y, opt);

  AggregatorModel m;
  m.feature_names = feature_names();
  m.scaler_means = scaler.means;
  m.scaler_stds = scaler.stds;
  m.degenerate_features = scaler.degenerate;
  m.weights = fit.weights;
  m.intercept = fit.intercept;
  m.threshold = choice.threshold;
  m.params = params;
  m.iterations = fit.iterations;
  m.converged = fit.converged;
  m.cv_f1 = choice.f1;
  return m;
}

double model_score(const AggregatorModel& m, const FeatureVector& f) {
  if (m.weights.size() != kFeatureCount) throw Error(ErrorKind::Input, "ShapeMismatch", "model has wrong weight count");
  const Eigen::VectorXd z = (f - m.scaler_means).cwiseQuotient(m.scaler_stds);
  return sigmoid(m.weights.dot(z) + m.intercept);
}

VideoVerdict predict_video(const AggregatorModel& m, const std::string& video_id, std::span<const FrameLabel> labels) {
  const double score = model_score(m, features(labels));
  return {video_id, label_from_bool(score > m.threshold), "lr", score};
}

VideoVerdict threshold_aggregate(const std::string& video_id, std::span<const FrameLabel> labels, const ThresholdRule& rule) {
  if (rule.k < 0) throw Error(ErrorKind::Config, "InvalidConfig", "threshold k must be >= 0");
  long count = 0;
  for (auto l : labels) count += is_glitchy(l);
  return {video_id, label_from_bool(count > rule.k), rule.id(), std::nullopt};
}

std::string feature_csv(const std::vector<FeatureRow>& rows) {
  std::string out = "video_id";
  for (const auto& n : feature_names()) out += "," + n;
  out += ",label\n";
  for (const auto& r : rows) {
    out += r.video_id;
    for (Eigen::Index i = 0; i < r.values.size(); ++i) out += "," + shortest(r.values(i));
    out += ",";
    if (r.label) out += is_glitchy(*r.label) ? "1" : "0";
    out += "\n";
  }
  return out;
}

}  // namespace resp::aggregate
