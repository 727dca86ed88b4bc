#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

#include "spacebyte/model_config.h"
#include "spacebyte/trainer.h"

namespace spacebyte {

struct DataConfig {
  std::string path;
  double eval_fraction = 0.1;
  // BPE vocabulary for subword models. When empty, one is trained on the
  // training split with model.vocab_size ids.
  std::string vocab;

  bool operator==(const DataConfig&) const = default;
};

struct EvalConfig {
  std::size_t windows = 64;  // 0: every whole window of the held-out tail
  std::size_t batch_size = 8;

  bool operator==(const EvalConfig&) const = default;
};

struct RunConfig {
  ModelConfig model = ModelConfig::make_spacebyte(128, 64, 2, 2);
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);

// Missing keys keep their defaults; unknown keys and wrongly typed values
// raise ConfigError naming the key. The model section is validated.
ModelConfig model_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

// Reads either a full run config or, when the document has no "model"
// section, a bare model config. Throws ConfigError or DataError.
RunConfig load_run_config(const std::string& path);
ModelConfig load_model_config(const std::string& path);

}  // namespace spacebyte
