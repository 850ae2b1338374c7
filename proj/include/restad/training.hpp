#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "restad/init.hpp"
#include "restad/model.hpp"

namespace restad {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;
  /// Global L2 norm cap applied to gradients before each step; off when unset.
  std::optional<double> clip_grad_norm;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::string checksum;

  /// One JSON object per epoch; wall-clock time lives in its own field.
  std::string to_json_lines() const;
};

/// (1/B) * sum_i ||X_i - Xhat_i||_F^2 over a [B, T, d] batch.
Tensor mse_loss(const Tensor& target, const Tensor& reconstruction);

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step = 0;
};

/// One bias-corrected ADAM update of every tensor in `params` from its grad.
void adam_step(std::span<Tensor> params, AdamState& state, const TrainConfig& config);

/// Called after every epoch with the record just appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch reconstruction training over `windows` [N, T, d].
/// Throws NumericError naming the batch when the loss stops being finite.
TrainLog fit(RestadModel& model, const Tensor& windows, const TrainConfig& config,
             const EpochCallback& on_epoch = {});

struct TwoPhaseResult {
  RestadModel model;
  TrainLog base_log;
  TrainLog full_log;
  double initial_gamma = 0.0;
};

/// Trains a base model without the RBF layer, seeds the RBF layer from
/// K-means over its latents, then trains the full model. The full model
/// starts from the base model's embedding and pre-RBF encoder layers.
TwoPhaseResult train_restad_kmeans(const Tensor& windows, const ModelConfig& model_config,
                                   const TrainConfig& train_config,
                                   GammaInitMode gamma_mode = GammaInitMode::paper,
                                   const EpochCallback& on_epoch = {});

}  // namespace restad
