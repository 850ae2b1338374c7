#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "restad/data.hpp"
#include "restad/init.hpp"
#include "restad/metrics.hpp"
#include "restad/model.hpp"
#include "restad/scoring.hpp"
#include "restad/training.hpp"

namespace restad {

enum class InitMode { random, kmeans };

std::string to_string(InitMode m);
InitMode init_mode_from_string(const std::string& s);

struct DataSource {
  std::optional<std::filesystem::path> path;
  std::optional<SynthSpec> synth;
};

struct RunConfig {
  static constexpr int kSchemaVersion = 1;

  DataSource data;
  ModelConfig model;
  TrainConfig train;
  InitMode init = InitMode::random;
  GammaInitMode gamma_mode = GammaInitMode::paper;
  Criterion criterion = Criterion::r_times_s;
  double anomaly_ratio = 0.01;
  std::size_t max_buffer = 4;
  std::filesystem::path output_dir = "restad_out";
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  /// Exactly one data source, and valid sub-configs.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

RawDataset load_dataset(const DataSource& source);

/// Normalized splits and their non-overlapping windows.
struct PreparedData {
  RawDataset normalized;
  WindowedDataset train;
  WindowedDataset test;
};

PreparedData prepare_data(const RawDataset& raw, std::size_t window_len);

struct TrainOutcome {
  RestadModel model;
  TrainLog log;
  std::optional<TrainLog> base_log;
  std::optional<double> initial_gamma;
};

/// Builds and trains the configured model. The run seed drives both model
/// initialization and batch order; input_dim is taken from the data.
TrainOutcome train_model(const RunConfig& config, const PreparedData& data);

struct EvalOutcome {
  Criterion criterion;
  EvalReport report;
  ScoreTrace trace;
  std::vector<int> labels;
};

/// One scoring pass over the test windows shared by every criterion.
std::vector<EvalOutcome> evaluate_model(const RestadModel& model, const PreparedData& data,
                                        const std::vector<Criterion>& criteria, double anomaly_ratio,
                                        std::size_t max_buffer);

// ---------------------------------------------------------------------------
// Commands. Each returns the files it wrote.

std::vector<std::filesystem::path> cmd_synth(const SynthSpec& spec, const std::filesystem::path& out_dir);

std::vector<std::filesystem::path> cmd_train(const RunConfig& config);

std::vector<std::filesystem::path> cmd_eval(const std::filesystem::path& checkpoint, const DataSource& data,
                                            const std::vector<Criterion>& criteria, double anomaly_ratio,
                                            std::size_t max_buffer, const std::filesystem::path& out_dir);

enum class AblationAxis { criterion, rbf_position, n_centers };

std::string to_string(AblationAxis a);
AblationAxis ablation_axis_from_string(const std::string& s);

struct AblationGrid {
  static constexpr int kSchemaVersion = 1;

  RunConfig base;
  AblationAxis axis = AblationAxis::criterion;
  /// Criterion names ("transformer" = RBF disabled, r_only), or integers.
  std::vector<std::string> values;
  std::size_t repeats = 1;
  std::size_t parallel = 1;

  void validate() const;
};

nlohmann::json to_json(const AblationGrid& g);
AblationGrid ablation_grid_from_json(const nlohmann::json& j);

struct AblationCell {
  std::string value;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalReport report;
};

struct AblationAggregate {
  std::string value;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  std::array<double, 5> mean{};  // f1, auc_roc, auc_pr, vus_roc, vus_pr
  std::array<double, 5> stddev{};
};

struct AblationResult {
  AblationAxis axis = AblationAxis::criterion;
  std::vector<AblationCell> cells;
  std::vector<AblationAggregate> aggregates;

  std::string to_csv() const;
};

/// Seed of ablation cell `index`, derived from the base seed only.
std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t index);

/// Runs every (value, repeat) cell. For the criterion axis all criteria of a
/// repeat score the same trained model. Failed cells are recorded, not thrown.
AblationResult run_ablation(const AblationGrid& grid);

std::vector<std::filesystem::path> cmd_ablate(const AblationGrid& grid, const std::filesystem::path& out_csv);

}  // namespace restad
