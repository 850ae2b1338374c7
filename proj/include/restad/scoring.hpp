#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "restad/data.hpp"
#include "restad/model.hpp"

namespace restad {

enum class Criterion { r_only, s_only, r_plus_s, r_times_s };

std::string to_string(Criterion c);
Criterion criterion_from_string(const std::string& s);
bool needs_similarity(Criterion c);

/// Per-time-point squared L2 error over features: [N, T, d] x2 -> N*T values.
std::vector<double> reconstruction_error(const Tensor& x, const Tensor& reconstruction);

/// Mean over centers of the RBF output: [N, T, M] -> N*T values.
std::vector<double> mean_similarity(const Tensor& z);
/// 1 - mean over centers of the RBF output: [N, T, M] -> N*T values.
std::vector<double> dissimilarity(const Tensor& z);

struct Bounds {
  double min = 0.0;
  double max = 0.0;
};

struct MinMaxResult {
  std::vector<double> values;
  Bounds bounds;
};

/// (v - min) / (max - min); a constant sequence maps to all zeros.
MinMaxResult minmax(std::span<const double> v);
/// MinMax of 1 - a, evaluated as (max a - a) / (max a - min a). Similarities
/// far below machine epsilon all round to eps_s = 1, but keep their order here.
MinMaxResult minmax_complement(std::span<const double> a);

/// Raw per-point channels in original time order, before normalization.
struct ScoreChannels {
  std::vector<double> eps_r;
  std::vector<double> eps_s;       // empty for a model without RBF layer
  std::vector<double> similarity;  // mean RBF output, eps_s = 1 - similarity
  std::vector<std::size_t> global_index;

  bool has_similarity() const { return !eps_s.empty(); }
};

struct ScoreTrace {
  Criterion criterion = Criterion::r_times_s;
  std::vector<std::size_t> global_index;
  std::vector<double> eps_r;
  std::vector<double> eps_s;
  std::vector<double> composite;
  Bounds r_bounds;
  Bounds s_bounds;
};

/// MinMax-normalizes both channels over the whole set, then combines them.
/// When `similarity` is given, eps_s is normalized from it via minmax_complement.
ScoreTrace composite_score(std::span<const double> eps_r, std::span<const double> eps_s, Criterion criterion,
                           std::span<const double> similarity = {});

/// Runs the model over every window (no gradients) and concatenates the
/// per-point channels in window order.
ScoreChannels score_channels(const RestadModel& model, const WindowedDataset& data, std::size_t batch_size = 32);

ScoreTrace make_trace(const ScoreChannels& channels, Criterion criterion);

/// Labels of the evaluated points, looked up by global index.
std::vector<int> aligned_labels(const ScoreTrace& trace, std::span<const int> labels);

/// Columns: global_time_index, eps_r, eps_s, composite, label. eps_s and
/// label cells are left empty when unavailable.
void write_trace_csv(const ScoreTrace& trace, std::span<const int> labels, const std::filesystem::path& path);

}  // namespace restad
