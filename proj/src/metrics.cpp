#include "restad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "restad/errors.hpp"

namespace restad {

namespace {

// Indices ordered by score descending; equal scores keep index order.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

struct Mass {
  double positive = 0.0;
  double negative = 0.0;
};

Mass total_mass(std::span<const double> scores, std::span<const double> labels, const char* metric) {
  if (scores.size() != labels.size()) {
    throw DimensionError(std::string(metric) + ": " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  Mass m;
  for (double l : labels) {
    if (!(l >= 0.0 && l <= 1.0)) throw ContractError(std::string(metric) + ": labels must lie in [0, 1]");
    m.positive += l;
    m.negative += 1.0 - l;
  }
  if (!(m.positive > 0.0) || !(m.negative > 0.0)) {
    throw UndefinedMetricError(std::string(metric) + " is undefined unless both classes are present");
  }
  return m;
}

std::vector<double> as_double(std::span<const int> labels) { return {labels.begin(), labels.end()}; }

}  // namespace

void LabeledScores::validate(bool need_both_classes) const {
  if (scores.size() != labels.size()) {
    throw DimensionError("labeled scores: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  bool has0 = false, has1 = false;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ContractError("labeled scores: labels must be 0 or 1");
    (l ? has1 : has0) = true;
  }
  if (need_both_classes && !(has0 && has1)) {
    throw UndefinedMetricError("labeled scores: both classes must be present");
  }
}

Threshold quantile_threshold(std::span<const double> scores, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ContractError("quantile_threshold: ratio must lie in (0, 1)");
  if (scores.empty()) throw ContractError("quantile_threshold: no scores");
  const std::size_t n = scores.size();
  Threshold th;
  th.flagged_count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  th.flagged.assign(n, 0);
  const auto order = descending_order(scores);
  for (std::size_t i = 0; i < th.flagged_count; ++i) th.flagged[order[i]] = 1;
  th.delta = scores[order[std::min(th.flagged_count, n - 1)]];
  return th;
}

F1Result f1_from_predictions(std::span<const int> labels, std::span<const std::uint8_t> predicted) {
  if (labels.size() != predicted.size()) {
    throw DimensionError("f1: " + std::to_string(labels.size()) + " labels vs " + std::to_string(predicted.size()) +
                         " predictions");
  }
  F1Result r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool truth = labels[i] != 0;
    const bool pred = predicted[i] != 0;
    if (truth && pred) ++r.true_positives;
    if (!truth && pred) ++r.false_positives;
    if (truth && !pred) ++r.false_negatives;
  }
  const double tp = static_cast<double>(r.true_positives);
  if (r.true_positives + r.false_positives > 0) r.precision = tp / static_cast<double>(r.true_positives + r.false_positives);
  if (r.true_positives + r.false_negatives > 0) r.recall = tp / static_cast<double>(r.true_positives + r.false_negatives);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

F1Result f1_at_threshold(const LabeledScores& ls, double delta) {
  ls.validate(false);
  std::vector<std::uint8_t> pred(ls.scores.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = ls.scores[i] > delta ? 1 : 0;
  return f1_from_predictions(ls.labels, pred);
}

double soft_auc_roc(std::span<const double> scores, std::span<const double> labels) {
  const Mass total = total_mass(scores, labels, "auc_roc");
  const auto order = descending_order(scores);
  double tp = 0.0, fp = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    const double tp_prev = tp, fp_prev = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      tp += labels[order[i]];
      fp += 1.0 - labels[order[i]];
    }
    area += (fp - fp_prev) * (tp + tp_prev) / 2.0;
  }
  return area / (total.positive * total.negative);
}

double soft_auc_pr(std::span<const double> scores, std::span<const double> labels) {
  const Mass total = total_mass(scores, labels, "auc_pr");
  const auto order = descending_order(scores);
  double tp = 0.0, count = 0.0, area = 0.0;
  double recall_prev = 0.0, precision_prev = -1.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    const double tp_before = tp;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      tp += labels[order[i]];
      count += 1.0;
    }
    if (!(tp > tp_before)) continue;
    const double recall = tp / total.positive;
    const double precision = tp / count;
    // The curve is held flat from recall 0 up to the first operating point.
    if (precision_prev < 0.0) precision_prev = precision;
    area += (recall - recall_prev) * (precision + precision_prev) / 2.0;
    recall_prev = recall;
    precision_prev = precision;
  }
  return area;
}

double auc_roc(const LabeledScores& ls) {
  ls.validate();
  return soft_auc_roc(ls.scores, as_double(ls.labels));
}

double auc_pr(const LabeledScores& ls) {
  ls.validate();
  return soft_auc_pr(ls.scores, as_double(ls.labels));
}

std::vector<double> buffered_labels(std::span<const int> labels, std::size_t buffer) {
  const std::size_t n = labels.size();
  constexpr std::size_t kFar = std::numeric_limits<std::size_t>::max();
  // Distance to the nearest anomalous point on either side.
  std::vector<std::size_t> dist(n, kFar);
  std::size_t last = kFar;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i]) last = i;
    if (last != kFar) dist[i] = i - last;
  }
  last = kFar;
  for (std::size_t i = n; i-- > 0;) {
    if (labels[i]) last = i;
    if (last != kFar) dist[i] = std::min(dist[i], last - i);
  }
  std::vector<double> out(n, 0.0);
  const double width = static_cast<double>(buffer + 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (dist[i] == 0) {
      out[i] = 1.0;
    } else if (dist[i] <= buffer) {
      out[i] = 1.0 - static_cast<double>(dist[i]) / width;
    }
  }
  return out;
}

double vus(const LabeledScores& ls, Curve curve, std::size_t max_buffer) {
  ls.validate();
  double total = 0.0;
  for (std::size_t l = 0; l <= max_buffer; ++l) {
    const auto soft = buffered_labels(ls.labels, l);
    total += curve == Curve::roc ? soft_auc_roc(ls.scores, soft) : soft_auc_pr(ls.scores, soft);
  }
  return total / static_cast<double>(max_buffer + 1);
}

EvalReport evaluate(const LabeledScores& ls, double ratio, std::size_t max_buffer) {
  ls.validate();
  EvalReport r;
  const Threshold th = quantile_threshold(ls.scores, ratio);
  const F1Result f = f1_from_predictions(ls.labels, th.flagged);
  r.f1 = f.f1;
  r.precision = f.precision;
  r.recall = f.recall;
  r.threshold = th.delta;
  r.anomaly_ratio = ratio;
  r.auc_roc = auc_roc(ls);
  r.auc_pr = auc_pr(ls);
  r.vus_roc = vus(ls, Curve::roc, max_buffer);
  r.vus_pr = vus(ls, Curve::pr, max_buffer);
  r.n_points = ls.scores.size();
  r.n_anomalies = static_cast<std::size_t>(std::count(ls.labels.begin(), ls.labels.end(), 1));
  r.n_flagged = th.flagged_count;
  r.max_buffer = max_buffer;
  return r;
}

nlohmann::json EvalReport::to_json() const {
  return {{"schema_version", kSchemaVersion},
          {"f1", f1},
          {"precision", precision},
          {"recall", recall},
          {"threshold", threshold},
          {"anomaly_ratio", anomaly_ratio},
          {"auc_roc", auc_roc},
          {"auc_pr", auc_pr},
          {"vus_roc", vus_roc},
          {"vus_pr", vus_pr},
          {"n_points", n_points},
          {"n_anomalies", n_anomalies},
          {"n_flagged", n_flagged},
          {"max_buffer", max_buffer}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw ParseError("eval report: unsupported schema_version " + j.at("schema_version").dump());
    }
    EvalReport r;
    r.f1 = j.at("f1").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.anomaly_ratio = j.at("anomaly_ratio").get<double>();
    r.auc_roc = j.at("auc_roc").get<double>();
    r.auc_pr = j.at("auc_pr").get<double>();
    r.vus_roc = j.at("vus_roc").get<double>();
    r.vus_pr = j.at("vus_pr").get<double>();
    r.n_points = j.at("n_points").get<std::size_t>();
    r.n_anomalies = j.at("n_anomalies").get<std::size_t>();
    r.n_flagged = j.at("n_flagged").get<std::size_t>();
    r.max_buffer = j.at("max_buffer").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  }
}

std::string EvalReport::to_table(const std::string& row_label) const {
  char buf[512];
  const int label_w = std::max<int>(8, static_cast<int>(row_label.size()));
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-*s  %8s  %8s  %8s  %8s  %8s\n", label_w, "", "F1-Score", "AUC-ROC", "AUC-PR",
                "VUS-ROC", "VUS-PR");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-*s  %8.4f  %8.4f  %8.4f  %8.4f  %8.4f\n", label_w, row_label.c_str(), f1, auc_roc,
                auc_pr, vus_roc, vus_pr);
  out += buf;
  return out;
}

}  // namespace restad
