#include "spacebyte/model_config.h"

#include <string>

#include "spacebyte/error.h"

namespace spacebyte {

std::string_view kind_name(ArchKind k) noexcept {
  switch (k) {
    case ArchKind::transformer:
      return "transformer";
    case ArchKind::window_transformer:
      return "window_transformer";
    case ArchKind::megabyte:
      return "megabyte";
    case ArchKind::spacebyte:
      return "spacebyte";
    case ArchKind::spacebyte_fixed:
      return "spacebyte_fixed";
  }
  return "?";
}

ArchKind parse_kind(std::string_view name) {
  for (ArchKind k : {ArchKind::transformer, ArchKind::window_transformer, ArchKind::megabyte,
                     ArchKind::spacebyte, ArchKind::spacebyte_fixed}) {
    if (kind_name(k) == name) {
      return k;
    }
  }
  throw ConfigError("unknown architecture kind '" + std::string(name) +
                    "' (expected transformer, window_transformer, megabyte, spacebyte, "
                    "spacebyte_fixed)");
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) {
    throw ConfigError("model config: " + msg);
  }
}

void require_heads(std::size_t dim, std::size_t head_dim, const char* field) {
  require(dim > 0, std::string(field) + " must be positive");
  require(head_dim > 0 && head_dim % 2 == 0, "head_dim must be positive and even");
  require(dim % head_dim == 0, std::string(field) + " = " + std::to_string(dim) +
                                   " is not a multiple of head_dim = " +
                                   std::to_string(head_dim));
}

}  // namespace

void ModelConfig::validate() const {
  require(context > 0, "context must be positive");
  require(ff_mult > 0, "ff_mult must be positive");
  require(vocab_size > 0, "vocab_size must be positive");
  if (kind == ArchKind::transformer || kind == ArchKind::window_transformer) {
    require_heads(dim, head_dim, "dim");
    require(!is_subword() || vocab_size > static_cast<std::size_t>(kSubwordBos),
            "subword vocab_size must exceed 256");
    return;
  }
  require(vocab_size == kByteVocab, "multiscale models are byte-level (vocab_size 256)");
  require(!tie_embeddings, "tie_embeddings applies to subword transformers only");
  require_heads(dim, head_dim, "dim");
  require_heads(local_dim, head_dim, "local_dim");
  require(global_context > 0, "global_context must be positive");
  require(global_context <= context, "global_context (" + std::to_string(global_context) +
                                         ") exceeds context (" + std::to_string(context) + ")");
  if (kind == ArchKind::spacebyte) {
    require(local_dim <= dim, "local_dim exceeds dim");
    return;
  }
  require(patch_size >= 1, "patch_size must be >= 1");
  require(context == patch_size * global_context,
          "context must equal patch_size * global_context for fixed patches");
  if (kind == ArchKind::spacebyte_fixed) {
    require(local_dim <= dim, "local_dim exceeds dim");
  } else {
    require(dim % patch_size == 0, "megabyte dim must be divisible by patch_size");
  }
}

ModelConfig ModelConfig::make_transformer(std::size_t dim, std::size_t layers,
                                          std::size_t vocab) {
  ModelConfig c;
  c.kind = ArchKind::transformer;
  c.vocab_size = vocab;
  c.dim = dim;
  c.context = dim;
  c.window = dim;
  c.layers = layers;
  c.tie_embeddings = vocab != kByteVocab;
  return c;
}

ModelConfig ModelConfig::make_window_transformer(std::size_t dim, std::size_t layers,
                                                 std::size_t patch) {
  ModelConfig c;
  c.kind = ArchKind::window_transformer;
  c.dim = dim;
  c.context = patch * dim;
  c.window = dim;
  c.layers = layers;
  c.patch_size = patch;
  return c;
}

ModelConfig ModelConfig::make_megabyte(std::size_t dim, std::size_t local_dim,
                                       std::size_t layers, std::size_t patch) {
  ModelConfig c;
  c.kind = ArchKind::megabyte;
  c.dim = dim;
  c.local_dim = local_dim;
  c.patch_size = patch;
  c.global_context = dim;
  c.context = patch * dim;
  c.global_layers = layers;
  c.local_layers = layers;
  return c;
}

ModelConfig ModelConfig::make_spacebyte(std::size_t dim, std::size_t local_dim,
                                        std::size_t global_layers, std::size_t local_layers,
                                        std::size_t avg_patch) {
  ModelConfig c;
  c.kind = ArchKind::spacebyte;
  c.dim = dim;
  c.local_dim = local_dim;
  c.global_context = dim;
  c.context = avg_patch * dim;
  c.local_window = local_dim;
  c.global_layers = global_layers;
  c.local_layers = local_layers;
  return c;
}

ModelConfig ModelConfig::make_spacebyte_fixed(std::size_t dim, std::size_t local_dim,
                                              std::size_t global_layers,
                                              std::size_t local_layers, std::size_t patch) {
  ModelConfig c = make_spacebyte(dim, local_dim, global_layers, local_layers, patch);
  c.kind = ArchKind::spacebyte_fixed;
  c.patch_size = patch;
  return c;
}

}  // namespace spacebyte
