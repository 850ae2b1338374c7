#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "restad/tensor.hpp"

namespace restad {

struct ModelConfig {
  std::size_t input_dim = 1;
  std::size_t window_len = 100;
  std::size_t d_model = 32;
  std::size_t ffn_dim = 128;
  std::size_t n_heads = 8;
  std::size_t n_layers = 3;
  bool rbf_enabled = true;
  std::size_t rbf_position = 2;  // 1-based: RBF sits after this encoder layer
  std::size_t n_centers = 32;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// Width of the hidden state entering encoder layer `layer` (0-based).
  std::size_t layer_width(std::size_t layer) const;
  /// Width consumed by the reconstruction head.
  std::size_t output_width() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Learnable centers [M, d_h] and log-width gamma [1] of the RBF similarity layer.
struct RbfLayer {
  Tensor centers;
  Tensor gamma;

  std::size_t n_centers() const { return centers.dim(0); }
  std::size_t width() const { return centers.dim(1); }
};

/// z[.., m] = exp(-1/2 * e^gamma * ||h - c_m||^2)
Tensor rbf_forward(const Tensor& hidden, const RbfLayer& layer);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  Tensor operator()(const Tensor& x) const;
};

struct EncoderLayer {
  std::size_t width = 0;
  std::size_t n_heads = 1;
  Linear query, key, value, attn_out;
  Tensor norm1_gain, norm1_bias;
  Linear ffn_in, ffn_out;
  Tensor norm2_gain, norm2_bias;
};

/// Multi-head self-attention over [B, T, w] without masking.
Tensor self_attention(const EncoderLayer& layer, const Tensor& h);

/// Post-norm layer: h' = LN(h + MHSA(h)); out = LN(h' + FFN(h')).
/// `dropout` applies to both sub-layer outputs when `rng` is non-null.
Tensor encoder_layer_forward(const EncoderLayer& layer, const Tensor& h, double dropout = 0.0,
                             std::mt19937_64* rng = nullptr);

/// Fixed sinusoidal table [length, width]: sin at even columns, cos at odd.
Tensor sinusoidal_positions(std::size_t length, std::size_t width);

struct ForwardOutput {
  Tensor reconstruction;             // [B, T, d]
  std::optional<Tensor> rbf_output;  // [B, T, M] when the RBF layer is enabled
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Transformer encoder reconstruction model with an optional RBF layer
/// inserted after a configurable encoder layer.
class RestadModel {
 public:
  explicit RestadModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  Tensor embed(const Tensor& x) const;
  /// Embedding followed by the first `n_layers` encoder layers, RBF skipped.
  Tensor hidden_at(const Tensor& x, std::size_t n_layers) const;
  ForwardOutput forward(const Tensor& x) const;
  /// Forward pass with dropout active (identical to forward() when dropout is 0).
  ForwardOutput forward_train(const Tensor& x);

  const std::optional<RbfLayer>& rbf() const { return rbf_; }
  void set_rbf(RbfLayer layer);

  Linear& token_projection() { return token_; }
  const Linear& token_projection() const { return token_; }
  std::vector<EncoderLayer>& layers() { return layers_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }
  Linear& head() { return head_; }
  const Linear& head() const { return head_; }
  const Tensor& positional_table() const { return positions_; }

  /// Every trainable tensor under a stable dotted name, in a fixed order.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
  /// FNV-1a over the raw bytes of every parameter, as 16 hex digits.
  std::string checksum() const;

 private:
  ForwardOutput run(const Tensor& x, double dropout, std::mt19937_64* rng) const;

  ModelConfig config_;
  Linear token_;
  Tensor positions_;
  std::vector<EncoderLayer> layers_;
  std::optional<RbfLayer> rbf_;
  Linear head_;
  std::mt19937_64 dropout_rng_;
};

}  // namespace restad
