#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "restad/tensor.hpp"

namespace restad {

/// Time-major multivariate series: rows are time points, columns features.
struct Series {
  std::size_t length = 0;
  std::size_t dims = 0;
  std::vector<double> values;

  double at(std::size_t t, std::size_t f) const { return values[t * dims + f]; }
  double& at(std::size_t t, std::size_t f) { return values[t * dims + f]; }
  bool operator==(const Series&) const = default;
};

struct RawDataset {
  std::string name;
  Series train;
  Series test;
  std::vector<int> test_labels;

  void validate() const;
  bool operator==(const RawDataset&) const = default;
};

/// Reads headerless numeric train.csv, test.csv and test_labels.csv from `dir`.
/// Errors carry the file name and 1-based line number.
RawDataset load_csv(const std::filesystem::path& dir);
Series parse_csv_series(const std::string& text, const std::string& source);
void write_csv(const RawDataset& data, const std::filesystem::path& dir);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

FeatureStats feature_stats(const Series& s);

/// Z-scores both splits with train-split statistics. A constant train feature
/// is only centered.
RawDataset normalize(const RawDataset& raw);

struct WindowedDataset {
  Tensor windows;  // [N, window_len, d]
  std::size_t window_len = 0;
  std::vector<std::size_t> starts;  // global start index of each window
  std::size_t dropped_tail = 0;

  std::size_t count() const { return starts.size(); }
  std::size_t global_index(std::size_t window, std::size_t offset) const { return starts[window] + offset; }
};

/// Non-overlapping contiguous windows; a trailing remainder shorter than one
/// window is dropped and its length recorded.
WindowedDataset windowize(const Series& series, std::size_t window_len = 100);

enum class AnomalyKind { spike, subtle_drift, subsequence };

struct PlantedAnomaly {
  AnomalyKind kind = AnomalyKind::spike;
  std::size_t position = 0;
  /// In units of the per-feature standard deviation of the clean signal.
  double magnitude = 8.0;
  std::size_t length = 1;
};

struct Sinusoid {
  double period = 50.0;
  double amplitude = 1.0;
};

struct SynthSpec {
  std::string name = "synthetic";
  std::size_t train_length = 5000;
  std::size_t test_length = 5000;
  std::size_t dims = 2;
  std::vector<Sinusoid> components{{40.0, 1.0}, {13.0, 0.5}};
  double noise_std = 0.1;
  std::vector<PlantedAnomaly> anomalies;
  std::uint64_t seed = 0;

  /// Throws ConfigError for out-of-range or overlapping anomalies.
  void validate() const;
};

/// Default benchmark layout: 10 spikes of 6-10 sigma and 10 ten-point drifts
/// of 1.5-2.5 sigma, placed without overlap in the test split.
SynthSpec default_synth_spec(std::uint64_t seed, std::size_t test_length = 5000, std::size_t n_spikes = 10,
                             std::size_t n_drifts = 10);

/// Sinusoid mixture plus Gaussian noise; anomalies go into the test split
/// only, and the labels mark exactly the injected indices.
RawDataset generate_synthetic(const SynthSpec& spec);

std::string to_string(AnomalyKind kind);
AnomalyKind anomaly_kind_from_string(const std::string& s);

}  // namespace restad
