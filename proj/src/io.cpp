#include "restad/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "restad/errors.hpp"

namespace restad {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& ctx) {
  require_object(j, ctx);
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items()) {
    if (!keys.count(k)) throw ConfigError(ctx + ": unknown key '" + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(ctx + ": bad value for key '" + key + "': " + e.what());
  }
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},     {"window_len", c.window_len}, {"d_model", c.d_model},
          {"ffn_dim", c.ffn_dim},         {"n_heads", c.n_heads},       {"n_layers", c.n_layers},
          {"rbf_enabled", c.rbf_enabled}, {"rbf_position", c.rbf_position}, {"n_centers", c.n_centers},
          {"dropout", c.dropout},         {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  const std::string ctx = "model config";
  check_keys(j,
             {"input_dim", "window_len", "d_model", "ffn_dim", "n_heads", "n_layers", "rbf_enabled", "rbf_position",
              "n_centers", "dropout", "seed"},
             ctx);
  ModelConfig c;
  read(j, "input_dim", c.input_dim, ctx);
  read(j, "window_len", c.window_len, ctx);
  read(j, "d_model", c.d_model, ctx);
  read(j, "ffn_dim", c.ffn_dim, ctx);
  read(j, "n_heads", c.n_heads, ctx);
  read(j, "n_layers", c.n_layers, ctx);
  read(j, "rbf_enabled", c.rbf_enabled, ctx);
  read(j, "rbf_position", c.rbf_position, ctx);
  read(j, "n_centers", c.n_centers, ctx);
  read(j, "dropout", c.dropout, ctx);
  read(j, "seed", c.seed, ctx);
  return c;
}

json to_json(const TrainConfig& c) {
  json j = {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
            {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2}, {"adam_eps", c.adam_eps},
            {"seed", c.seed},                   {"shuffle", c.shuffle}};
  j["clip_grad_norm"] = c.clip_grad_norm ? json(*c.clip_grad_norm) : json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  const std::string ctx = "train config";
  check_keys(j,
             {"learning_rate", "batch_size", "epochs", "adam_beta1", "adam_beta2", "adam_eps", "seed", "shuffle",
              "clip_grad_norm"},
             ctx);
  TrainConfig c;
  read(j, "learning_rate", c.learning_rate, ctx);
  read(j, "batch_size", c.batch_size, ctx);
  read(j, "epochs", c.epochs, ctx);
  read(j, "adam_beta1", c.adam_beta1, ctx);
  read(j, "adam_beta2", c.adam_beta2, ctx);
  read(j, "adam_eps", c.adam_eps, ctx);
  read(j, "seed", c.seed, ctx);
  read(j, "shuffle", c.shuffle, ctx);
  if (auto it = j.find("clip_grad_norm"); it != j.end() && !it->is_null()) {
    double v = 0.0;
    read(j, "clip_grad_norm", v, ctx);
    c.clip_grad_norm = v;
  }
  return c;
}

json to_json(const SynthSpec& s) {
  json comps = json::array();
  for (const auto& c : s.components) comps.push_back({{"period", c.period}, {"amplitude", c.amplitude}});
  json anoms = json::array();
  for (const auto& a : s.anomalies) {
    anoms.push_back({{"type", to_string(a.kind)}, {"position", a.position}, {"magnitude", a.magnitude},
                     {"length", a.length}});
  }
  return {{"name", s.name},           {"train_length", s.train_length}, {"test_length", s.test_length},
          {"dims", s.dims},           {"components", comps},            {"noise_std", s.noise_std},
          {"anomalies", anoms},       {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const json& j) {
  const std::string ctx = "synthetic spec";
  check_keys(j,
             {"name", "train_length", "test_length", "dims", "components", "noise_std", "anomalies", "seed",
              "default_anomalies"},
             ctx);
  SynthSpec s;
  read(j, "seed", s.seed, ctx);
  read(j, "test_length", s.test_length, ctx);
  // {"default_anomalies": {"spikes": n, "drifts": m}} places the standard benchmark set.
  if (auto it = j.find("default_anomalies"); it != j.end()) {
    const std::string sub = ctx + ".default_anomalies";
    check_keys(*it, {"spikes", "drifts"}, sub);
    std::size_t spikes = 10, drifts = 10;
    read(*it, "spikes", spikes, sub);
    read(*it, "drifts", drifts, sub);
    s = default_synth_spec(s.seed, s.test_length, spikes, drifts);
  }
  read(j, "name", s.name, ctx);
  read(j, "train_length", s.train_length, ctx);
  read(j, "dims", s.dims, ctx);
  read(j, "noise_std", s.noise_std, ctx);
  if (auto it = j.find("components"); it != j.end()) {
    if (!it->is_array()) throw ConfigError(ctx + ": key 'components' must be an array");
    s.components.clear();
    for (const auto& c : *it) {
      const std::string sub = ctx + ".components[]";
      check_keys(c, {"period", "amplitude"}, sub);
      Sinusoid sin;
      read(c, "period", sin.period, sub);
      read(c, "amplitude", sin.amplitude, sub);
      s.components.push_back(sin);
    }
  }
  if (auto it = j.find("anomalies"); it != j.end()) {
    if (!it->is_array()) throw ConfigError(ctx + ": key 'anomalies' must be an array");
    if (j.contains("default_anomalies")) throw ConfigError(ctx + ": give either 'anomalies' or 'default_anomalies'");
    s.anomalies.clear();
    for (const auto& a : *it) {
      const std::string sub = ctx + ".anomalies[]";
      check_keys(a, {"type", "position", "magnitude", "length"}, sub);
      PlantedAnomaly p;
      std::string type = "spike";
      read(a, "type", type, sub);
      p.kind = anomaly_kind_from_string(type);
      p.length = p.kind == AnomalyKind::spike ? 1 : 10;
      read(a, "position", p.position, sub);
      read(a, "magnitude", p.magnitude, sub);
      read(a, "length", p.length, sub);
      s.anomalies.push_back(p);
    }
  }
  s.validate();
  return s;
}

std::string to_string(GammaInitMode m) { return m == GammaInitMode::paper ? "paper" : "log_consistent"; }

GammaInitMode gamma_mode_from_string(const std::string& s) {
  if (s == "paper") return GammaInitMode::paper;
  if (s == "log_consistent") return GammaInitMode::log_consistent;
  throw ConfigError("unknown gamma_init_mode '" + s + "' (expected paper or log_consistent)");
}

json checkpoint_json(const RestadModel& model) {
  json params = json::array();
  for (const auto& p : model.parameters()) {
    auto v = p.tensor.values();
    params.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"values", std::vector<double>(v.begin(), v.end())}});
  }
  return {{"schema_version", kCheckpointSchemaVersion},
          {"format", "restad-checkpoint"},
          {"config", to_json(model.config())},
          {"parameters", params}};
}

RestadModel model_from_checkpoint(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "restad-checkpoint") throw ParseError("checkpoint: wrong format tag");
    const int version = j.at("schema_version").get<int>();
    if (version != kCheckpointSchemaVersion) {
      throw ParseError("checkpoint: unsupported schema_version " + std::to_string(version));
    }
    RestadModel model(model_config_from_json(j.at("config")));
    const auto& stored = j.at("parameters");
    auto params = model.parameters();
    if (stored.size() != params.size()) {
      throw ParseError("checkpoint: expected " + std::to_string(params.size()) + " parameters, found " +
                       std::to_string(stored.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& entry = stored[i];
      const auto name = entry.at("name").get<std::string>();
      if (name != params[i].name) {
        throw ParseError("checkpoint: parameter " + std::to_string(i) + " is '" + name + "', expected '" +
                         params[i].name + "'");
      }
      const auto shape = entry.at("shape").get<Shape>();
      if (shape != params[i].tensor.shape()) {
        throw ParseError("checkpoint: parameter '" + name + "' has shape " + shape_string(shape) + ", expected " +
                         shape_string(params[i].tensor.shape()));
      }
      const auto values = entry.at("values").get<std::vector<double>>();
      auto dst = params[i].tensor.mutable_values();
      if (values.size() != dst.size()) throw ParseError("checkpoint: parameter '" + name + "' has wrong value count");
      std::copy(values.begin(), values.end(), dst.begin());
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write " + tmp.string());
    out << text;
    if (!out) throw ParseError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const RestadModel& model, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_json(model).dump() + "\n");
}

RestadModel load_checkpoint(const std::filesystem::path& path) { return model_from_checkpoint(read_json_file(path)); }

}  // namespace restad
