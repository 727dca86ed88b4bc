#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "spacebyte/model_config.h"
#include "spacebyte/params.h"
#include "spacebyte/tokenizer.h"

namespace spacebyte {

inline constexpr int kCheckpointFormatVersion = 1;

// File layout: one line of UTF-8 JSON
//   {"format_version", "model_config", "parameters": [[name, shape, "f32",
//    byte_offset], ...], "tokenizer", "meta"}
// then '\n', then the little-endian float32 blobs in manifest order.
// Offsets count from the first blob byte.
struct Checkpoint {
  ModelConfig config;
  ParamStore<float> params;
  std::optional<BpeVocab> vocab;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamStore<float>& params, const BpeVocab* vocab = nullptr,
                     const nlohmann::json& meta = nlohmann::json::object());

// Throws DataError for unreadable, truncated, or inconsistent files.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace spacebyte
