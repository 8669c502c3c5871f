#include "resp/aggregate/stats.hpp"

#include <algorithm>
#include <cmath>

namespace resp::aggregate {

SequenceStats compute_stats(std::span<const FrameLabel> labels) {
  if (labels.empty()) throw Error(ErrorKind::Input, "EmptySequence", "compute_stats needs T >= 1");
  SequenceStats s;
  s.T = static_cast<int>(labels.size());

  // prefix[i] = glitchy frames among the first i labels
  std::vector<int> prefix(labels.size() + 1, 0);
  int run = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool g = is_glitchy(labels[i]);
    prefix[i + 1] = prefix[i] + (g ? 1 : 0);
    if (g) {
      if (run == 0) ++s.run_count;
      s.max_run = std::max(s.max_run, ++run);
    } else {
      run = 0;
    }
  }
  s.glitch_count = prefix.back();
  s.frac = static_cast<double>(s.glitch_count) / s.T;
  s.run_density = static_cast<double>(s.run_count) / s.T;

  for (int W : kWindowSizes) {
    const int w = std::min(W, s.T);
    int best = 0;
    for (int start = 0; start + w <= s.T; ++start) best = std::max(best, prefix[start + w] - prefix[start]);
    s.max_win[W] = best;
  }
  return s;
}

const std::vector<std::string>& candidate_stat_names() {
  static const std::vector<std::string> names{"T",         "glitch_density", "frac",       "max_run",    "max_win_5",
                                              "max_win_10", "max_win_15",     "max_win_20", "run_density"};
  return names;
}

Eigen::VectorXd candidate_stat_row(const SequenceStats& s) {
  Eigen::VectorXd row(9);
  row << s.T, s.glitch_count, s.frac, s.max_run, s.max_win.at(5), s.max_win.at(10), s.max_win.at(15),
      s.max_win.at(20), s.run_density;
  return row;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names{"T", "frac", "max_run", "max_win_5", "run_density"};
  return names;
}

FeatureVector features(const SequenceStats& s) {
  FeatureVector f;
  f << s.T, s.frac, s.max_run, s.max_win.at(5), s.run_density;
  return f;
}

CorrelationFilterResult correlation_filter(const std::vector<SequenceStats>& rows, double threshold) {
  if (rows.size() < 3)
    throw Error(ErrorKind::Input, "TooFewRows", "correlation_filter needs at least 3 rows, got " + std::to_string(rows.size()));
  const auto& names = candidate_stat_names();
  const auto d = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = candidate_stat_row(rows[i]).transpose();

  const Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
  const Eigen::VectorXd norms = centered.colwise().norm().transpose();

  CorrelationFilterResult out;
  std::vector<bool> constant(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    constant[static_cast<std::size_t>(j)] = !(norms(j) > 1e-12 * std::max(1.0, X.col(j).cwiseAbs().maxCoeff()));
    if (constant[static_cast<std::size_t>(j)]) out.constant.push_back(names[static_cast<std::size_t>(j)]);
  }

  out.correlation = Eigen::MatrixXd::Identity(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = a + 1; b < d; ++b) {
      double r = 0.0;
      if (!constant[static_cast<std::size_t>(a)] && !constant[static_cast<std::size_t>(b)])
        r = centered.col(a).dot(centered.col(b)) / (norms(a) * norms(b));
      out.correlation(a, b) = out.correlation(b, a) = r;
    }

  std::vector<bool> keep(static_cast<std::size_t>(d), true);
  for (Eigen::Index a = 0; a < d; ++a) {
    if (!keep[static_cast<std::size_t>(a)]) continue;
    for (Eigen::Index b = a + 1; b < d; ++b)
      if (keep[static_cast<std::size_t>(b)] && std::abs(out.correlation(a, b)) > threshold)
        keep[static_cast<std::size_t>(b)] = false;
  }
  for (Eigen::Index j = 0; j < d; ++j)
    (keep[static_cast<std::size_t>(j)] ? out.selected : out.dropped).push_back(names[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace resp::aggregate
