#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "restad/data.hpp"
#include "restad/init.hpp"
#include "restad/model.hpp"
#include "restad/training.hpp"

namespace restad {

// JSON forms of the configuration types. Parsers reject unknown keys and name
// the offending key in the ConfigError; missing keys keep their defaults.
nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

std::string to_string(GammaInitMode m);
GammaInitMode gamma_mode_from_string(const std::string& s);

inline constexpr int kCheckpointSchemaVersion = 1;

/// Checkpoint layout:
///   {"schema_version": 1, "format": "restad-checkpoint", "config": {...},
///    "parameters": [{"name": ..., "shape": [...], "values": [...]}, ...]}
/// Doubles are written in shortest round-trip form, so save/load is lossless.
nlohmann::json checkpoint_json(const RestadModel& model);
RestadModel model_from_checkpoint(const nlohmann::json& j);

void save_checkpoint(const RestadModel& model, const std::filesystem::path& path);
/// Throws ParseError for unreadable, malformed, or mismatched checkpoints.
RestadModel load_checkpoint(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename, so readers never see partial output.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace restad
