#include "restad/model.hpp"

#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "restad/errors.hpp"
#include "restad/init.hpp"

namespace restad {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

// Each parameter draws from its own stream keyed by (seed, name), so enabling
// the RBF layer or changing downstream widths leaves upstream init unchanged.
std::mt19937_64 param_engine(std::uint64_t seed, const std::string& name) {
  const std::uint64_t key = fnv1a(name.data(), name.size());
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  return std::mt19937_64(seq);
}

Linear make_linear(std::size_t in, std::size_t out, std::uint64_t seed, const std::string& name) {
  auto rng = param_engine(seed, name);
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out);
  for (double& v : w) v = dist(rng);
  return Linear{Tensor({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

EncoderLayer make_layer(std::size_t width, const ModelConfig& cfg, std::size_t index) {
  const std::string p = "layers." + std::to_string(index) + ".";
  EncoderLayer layer;
  layer.width = width;
  layer.n_heads = cfg.n_heads;
  layer.query = make_linear(width, width, cfg.seed, p + "attn.query");
  layer.key = make_linear(width, width, cfg.seed, p + "attn.key");
  layer.value = make_linear(width, width, cfg.seed, p + "attn.value");
  layer.attn_out = make_linear(width, width, cfg.seed, p + "attn.out");
  layer.norm1_gain = Tensor::full({width}, 1.0, true);
  layer.norm1_bias = Tensor::zeros({width}, true);
  layer.ffn_in = make_linear(width, cfg.ffn_dim, cfg.seed, p + "ffn.in");
  layer.ffn_out = make_linear(cfg.ffn_dim, width, cfg.seed, p + "ffn.out");
  layer.norm2_gain = Tensor::full({width}, 1.0, true);
  layer.norm2_bias = Tensor::zeros({width}, true);
  return layer;
}

Tensor dropout_mask(const Tensor& x, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(x.size());
  const double s = 1.0 / (1.0 - p);
  for (double& m : mask) m = keep(rng) ? s : 0.0;
  return mul(x, Tensor(x.shape(), std::move(mask)));
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (input_dim == 0) fail("input_dim must be positive");
  if (window_len == 0) fail("window_len must be positive");
  if (d_model == 0) fail("d_model must be positive");
  if (ffn_dim == 0) fail("ffn_dim must be positive");
  if (n_heads == 0) fail("n_heads must be positive");
  if (n_layers == 0) fail("n_layers must be positive");
  if (d_model % n_heads != 0) {
    fail("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (rbf_enabled) {
    if (n_centers == 0) fail("n_centers must be positive");
    if (rbf_position < 1 || rbf_position > n_layers) {
      fail("rbf_position (" + std::to_string(rbf_position) + ") must lie in [1, n_layers=" +
           std::to_string(n_layers) + "]");
    }
    if (rbf_position < n_layers && n_centers % n_heads != 0) {
      fail("n_centers (" + std::to_string(n_centers) + ") must be divisible by n_heads (" +
           std::to_string(n_heads) + ") when the RBF layer feeds another encoder layer");
    }
  }
}

std::size_t ModelConfig::layer_width(std::size_t layer) const {
  return (rbf_enabled && layer >= rbf_position) ? n_centers : d_model;
}

std::size_t ModelConfig::output_width() const { return layer_width(n_layers); }

Tensor rbf_forward(const Tensor& hidden, const RbfLayer& layer) {
  if (hidden.shape().back() != layer.width()) {
    throw ContractError("rbf_forward: hidden width " + std::to_string(hidden.shape().back()) +
                        " does not match center width " + std::to_string(layer.width()));
  }
  Tensor dist = squared_distance(hidden, layer.centers);
  return exp(scale(mul(dist, exp(layer.gamma)), -0.5));
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

Tensor self_attention(const EncoderLayer& layer, const Tensor& h) {
  const Shape& s = h.shape();
  if (s.size() != 3 || s[2] != layer.width) {
    throw DimensionError("self_attention: expected [B, T, " + std::to_string(layer.width) + "], got " +
                         shape_string(s));
  }
  const std::size_t batch = s[0], steps = s[1], heads = layer.n_heads;
  const std::size_t head_dim = layer.width / heads;
  auto split = [&](const Tensor& t) { return permute(reshape(t, {batch, steps, heads, head_dim}), {0, 2, 1, 3}); };
  Tensor q = split(layer.query(h));
  Tensor k_t = permute(reshape(layer.key(h), {batch, steps, heads, head_dim}), {0, 2, 3, 1});
  Tensor v = split(layer.value(h));
  Tensor scores = scale(matmul(q, k_t), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  Tensor context = matmul(softmax_last(scores), v);
  Tensor merged = reshape(permute(context, {0, 2, 1, 3}), {batch, steps, layer.width});
  return layer.attn_out(merged);
}

Tensor encoder_layer_forward(const EncoderLayer& layer, const Tensor& h, double dropout, std::mt19937_64* rng) {
  Tensor attn = self_attention(layer, h);
  if (rng && dropout > 0.0) attn = dropout_mask(attn, dropout, *rng);
  Tensor h1 = layer_norm(add(h, attn), layer.norm1_gain, layer.norm1_bias);
  Tensor ffn = layer.ffn_out(relu(layer.ffn_in(h1)));
  if (rng && dropout > 0.0) ffn = dropout_mask(ffn, dropout, *rng);
  return layer_norm(add(h1, ffn), layer.norm2_gain, layer.norm2_bias);
}

Tensor sinusoidal_positions(std::size_t length, std::size_t width) {
  std::vector<double> table(length * width);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < width; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * freq;
      table[pos * width + i] = std::sin(angle);
      if (i + 1 < width) table[pos * width + i + 1] = std::cos(angle);
    }
  }
  return Tensor({length, width}, std::move(table));
}

RestadModel::RestadModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  token_ = make_linear(config_.input_dim, config_.d_model, config_.seed, "embedding.token");
  positions_ = sinusoidal_positions(config_.window_len, config_.d_model);
  for (std::size_t i = 0; i < config_.n_layers; ++i) {
    layers_.push_back(make_layer(config_.layer_width(i), config_, i));
  }
  if (config_.rbf_enabled) {
    rbf_ = random_init(config_.n_centers, config_.layer_width(config_.rbf_position - 1),
                       config_.seed ^ 0x9e3779b97f4a7c15ull);
  }
  head_ = make_linear(config_.output_width(), config_.input_dim, config_.seed, "head");
  dropout_rng_.seed(config_.seed ^ 0xd1b54a32d192ed03ull);
}

Tensor RestadModel::embed(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[2] != config_.input_dim) {
    throw ContractError("embed: expected input [B, T, " + std::to_string(config_.input_dim) + "], got " +
                        shape_string(s));
  }
  const std::size_t steps = s[1];
  if (steps > config_.window_len) {
    throw ContractError("embed: sequence length " + std::to_string(steps) + " exceeds positional table length " +
                        std::to_string(config_.window_len));
  }
  Tensor pe = positions_;
  if (steps < config_.window_len) {
    auto all = positions_.values();
    pe = Tensor({steps, config_.d_model}, std::vector<double>(all.begin(), all.begin() + steps * config_.d_model));
  }
  return add(token_(x), pe);
}

Tensor RestadModel::hidden_at(const Tensor& x, std::size_t n_layers) const {
  if (n_layers > config_.n_layers) {
    throw ContractError("hidden_at: model has only " + std::to_string(config_.n_layers) + " layers");
  }
  Tensor h = embed(x);
  for (std::size_t i = 0; i < n_layers; ++i) {
    if (config_.rbf_enabled && i == config_.rbf_position) {
      throw ContractError("hidden_at: cannot pass the RBF layer; use forward()");
    }
    h = encoder_layer_forward(layers_[i], h);
  }
  return h;
}

ForwardOutput RestadModel::run(const Tensor& x, double dropout, std::mt19937_64* rng) const {
  ForwardOutput out;
  Tensor h = embed(x);
  for (std::size_t i = 0; i < config_.n_layers; ++i) {
    h = encoder_layer_forward(layers_[i], h, dropout, rng);
    if (rbf_ && i + 1 == config_.rbf_position) {
      h = rbf_forward(h, *rbf_);
      out.rbf_output = h;
    }
  }
  out.reconstruction = head_(h);
  return out;
}

ForwardOutput RestadModel::forward(const Tensor& x) const { return run(x, 0.0, nullptr); }

ForwardOutput RestadModel::forward_train(const Tensor& x) {
  return run(x, config_.dropout, config_.dropout > 0.0 ? &dropout_rng_ : nullptr);
}

void RestadModel::set_rbf(RbfLayer layer) {
  if (!config_.rbf_enabled) throw ContractError("set_rbf: model was built without an RBF layer");
  const std::size_t width = config_.layer_width(config_.rbf_position - 1);
  if (layer.centers.shape() != Shape{config_.n_centers, width} || layer.gamma.size() != 1) {
    throw DimensionError("set_rbf: expected centers [" + std::to_string(config_.n_centers) + ", " +
                         std::to_string(width) + "] and scalar gamma, got centers " +
                         shape_string(layer.centers.shape()));
  }
  auto as_param = [](const Tensor& t, Shape shape) {
    return Tensor(std::move(shape), std::vector<double>(t.values().begin(), t.values().end()), true);
  };
  layer.centers = as_param(layer.centers, layer.centers.shape());
  layer.gamma = as_param(layer.gamma, {1});
  rbf_ = std::move(layer);
}

std::vector<NamedTensor> RestadModel::parameters() const {
  std::vector<NamedTensor> params;
  auto linear = [&](const std::string& name, const Linear& l) {
    params.push_back({name + ".weight", l.weight});
    params.push_back({name + ".bias", l.bias});
  };
  linear("embedding.token", token_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    linear(p + "attn.query", l.query);
    linear(p + "attn.key", l.key);
    linear(p + "attn.value", l.value);
    linear(p + "attn.out", l.attn_out);
    params.push_back({p + "norm1.gain", l.norm1_gain});
    params.push_back({p + "norm1.bias", l.norm1_bias});
    linear(p + "ffn.in", l.ffn_in);
    linear(p + "ffn.out", l.ffn_out);
    params.push_back({p + "norm2.gain", l.norm2_gain});
    params.push_back({p + "norm2.bias", l.norm2_bias});
  }
  if (rbf_) {
    params.push_back({"rbf.centers", rbf_->centers});
    params.push_back({"rbf.gamma", rbf_->gamma});
  }
  linear("head", head_);
  return params;
}

std::size_t RestadModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

std::string RestadModel::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : parameters()) {
    auto v = p.tensor.values();
    h = fnv1a(v.data(), v.size() * sizeof(double), h);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace restad
