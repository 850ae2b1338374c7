#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace restad {

struct LabeledScores {
  std::vector<double> scores;
  std::vector<int> labels;

  /// Equal lengths and binary labels; with `need_both_classes`, at least one of each.
  void validate(bool need_both_classes = true) const;
};

struct Threshold {
  double delta = 0.0;
  std::size_t flagged_count = 0;
  std::vector<std::uint8_t> flagged;
};

/// Flags exactly floor(ratio * n) points: the highest scores after a stable
/// sort by (score desc, index asc). delta is the highest unflagged score.
Threshold quantile_threshold(std::span<const double> scores, double ratio);

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

/// Point-wise confusion counts; no point adjustment.
F1Result f1_from_predictions(std::span<const int> labels, std::span<const std::uint8_t> predicted);
/// Predicts anomalous where score > delta.
F1Result f1_at_threshold(const LabeledScores& ls, double delta);

/// Trapezoidal ROC area over every distinct threshold (ties count one half).
double auc_roc(const LabeledScores& ls);
/// Precision-recall area, trapezoidal between successive recall levels.
double auc_pr(const LabeledScores& ls);

// Same curves for continuous labels in [0, 1]: each point counts label as
// positive mass and (1 - label) as negative mass.
double soft_auc_roc(std::span<const double> scores, std::span<const double> labels);
double soft_auc_pr(std::span<const double> scores, std::span<const double> labels);

/// Extends every anomaly segment by `buffer` points per side with weights
/// decaying linearly as 1 - j / (buffer + 1) at distance j.
std::vector<double> buffered_labels(std::span<const int> labels, std::size_t buffer);

enum class Curve { roc, pr };

/// Mean of the buffered-label AUC over buffer widths 0..max_buffer.
double vus(const LabeledScores& ls, Curve curve, std::size_t max_buffer);

struct EvalReport {
  static constexpr int kSchemaVersion = 1;

  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
  double anomaly_ratio = 0.0;
  double auc_roc = 0.0;
  double auc_pr = 0.0;
  double vus_roc = 0.0;
  double vus_pr = 0.0;
  std::size_t n_points = 0;
  std::size_t n_anomalies = 0;
  std::size_t n_flagged = 0;
  std::size_t max_buffer = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// Aligned text table: F1-Score, AUC-ROC, AUC-PR, VUS-ROC, VUS-PR.
  std::string to_table(const std::string& row_label = "model") const;

  bool operator==(const EvalReport&) const = default;
};

EvalReport evaluate(const LabeledScores& ls, double ratio, std::size_t max_buffer = 4);

}  // namespace restad
