#include "restad/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "restad/errors.hpp"

namespace restad {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in (0, 1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in (0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (clip_grad_norm && !(*clip_grad_norm > 0.0)) throw ConfigError("clip_grad_norm must be positive");
}

std::string TrainLog::to_json_lines() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::json j = {{"schema_version", 1},
                        {"epoch", e.epoch},
                        {"mean_loss", e.mean_loss},
                        {"timing", {{"seconds", e.seconds}}}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

Tensor mse_loss(const Tensor& target, const Tensor& reconstruction) {
  if (target.shape() != reconstruction.shape()) {
    throw ContractError("mse_loss: target " + shape_string(target.shape()) + " vs reconstruction " +
                        shape_string(reconstruction.shape()));
  }
  const double batch = static_cast<double>(target.dim(0));
  return scale(sum(square(sub(reconstruction, target))), 1.0 / batch);
}

void adam_step(std::span<Tensor> params, AdamState& state, const TrainConfig& config) {
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0);
      state.second_moment.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ContractError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                        " tensors, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.adam_beta1, t);
  const double c2 = 1.0 - std::pow(config.adam_beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    auto g = p.grad();
    if (g.empty()) continue;
    auto w = p.mutable_values();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
      v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

namespace {

void clip_gradients(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double factor = max_norm / norm;
  for (Tensor& p : params) {
    for (double& g : p.mutable_grad()) g *= factor;
  }
}

}  // namespace

TrainLog fit(RestadModel& model, const Tensor& windows, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (windows.rank() != 3) throw DimensionError("fit: windows must be [N, T, d], got " + shape_string(windows.shape()));
  for (double v : windows.values()) {
    if (!std::isfinite(v)) throw NumericError("fit: training windows contain non-finite values");
  }
  std::vector<Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);

  TrainLog log;
  AdamState state;
  std::mt19937_64 rng(config.seed);
  const std::size_t n = windows.dim(0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      Tensor batch = gather_rows(windows, std::span(order).subspan(begin, end - begin));
      for (Tensor& p : params) p.zero_grad();
      ForwardOutput out = model.forward_train(batch);
      Tensor loss = mse_loss(batch, out.reconstruction);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_index));
      }
      backward(loss);
      if (config.clip_grad_norm) clip_gradients(params, *config.clip_grad_norm);
      adam_step(params, state, config);
      // Loss is per-sequence, so weight by batch length for the epoch mean.
      total += value * static_cast<double>(end - begin);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back({epoch + 1, total / static_cast<double>(n), secs});
    if (on_epoch) on_epoch(log.epochs.back());
  }
  log.checksum = model.checksum();
  return log;
}

TwoPhaseResult train_restad_kmeans(const Tensor& windows, const ModelConfig& model_config,
                                   const TrainConfig& train_config, GammaInitMode gamma_mode,
                                   const EpochCallback& on_epoch) {
  ModelConfig base_config = model_config;
  base_config.rbf_enabled = false;
  RestadModel base(base_config);
  TrainLog base_log = fit(base, windows, train_config, on_epoch);

  KMeansInitOptions init;
  init.n_centers = model_config.n_centers;
  init.rbf_position = model_config.rbf_position;
  init.gamma_mode = gamma_mode;
  init.kmeans.seed = train_config.seed;
  init.batch_size = train_config.batch_size;
  RbfLayer rbf = kmeans_init(base, windows, init);
  const double gamma0 = rbf.gamma.item();

  ModelConfig full_config = model_config;
  full_config.rbf_enabled = true;
  RestadModel full(full_config);
  // Carry over the trained embedding and encoder layers up to the RBF layer;
  // the centers live in their latent space.
  std::unordered_map<std::string, Tensor> trained;
  for (auto& p : base.parameters()) trained.emplace(p.name, p.tensor);
  for (auto& p : full.parameters()) {
    const bool pre_rbf =
        p.name.rfind("embedding.", 0) == 0 ||
        (p.name.rfind("layers.", 0) == 0 && std::stoul(p.name.substr(7)) < model_config.rbf_position);
    if (!pre_rbf) continue;
    auto it = trained.find(p.name);
    if (it == trained.end() || it->second.shape() != p.tensor.shape()) continue;
    auto dst = p.tensor.mutable_values();
    auto src = it->second.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  full.set_rbf(std::move(rbf));
  TrainLog full_log = fit(full, windows, train_config, on_epoch);
  return TwoPhaseResult{std::move(full), std::move(base_log), std::move(full_log), gamma0};
}

}  // namespace restad
