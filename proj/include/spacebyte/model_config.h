#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace spacebyte {

enum class ArchKind { transformer, window_transformer, megabyte, spacebyte, spacebyte_fixed };

std::string_view kind_name(ArchKind k) noexcept;
// Throws ConfigError for unknown names.
ArchKind parse_kind(std::string_view name);

inline constexpr std::size_t kByteVocab = 256;
// Subword vocabularies put BOS right after the 256 byte tokens.
inline constexpr std::int32_t kSubwordBos = 256;

// Architecture description. Field names follow their role:
//   context = T, dim = D (global dimension for multiscale kinds),
//   local_dim = D_local, global_context = T_global, patch_size = P,
//   window = W, local_window = W_local, layers = L, global_layers = L_global,
//   local_layers = total local blocks (split evenly before/after the global
//   blocks for SpaceByte; all after for MegaByte).
struct ModelConfig {
  ArchKind kind = ArchKind::spacebyte;
  std::size_t vocab_size = kByteVocab;
  std::size_t context = 0;
  std::size_t dim = 0;
  std::size_t local_dim = 0;
  std::size_t global_context = 0;
  std::size_t patch_size = 0;
  std::size_t window = 0;        // 0 means full context
  std::size_t local_window = 0;  // 0 means local_dim
  std::size_t layers = 0;
  std::size_t global_layers = 0;
  std::size_t local_layers = 0;
  std::size_t ff_mult = 4;
  std::size_t head_dim = 64;
  bool tie_embeddings = false;

  bool multiscale() const noexcept {
    return kind == ArchKind::megabyte || kind == ArchKind::spacebyte ||
           kind == ArchKind::spacebyte_fixed;
  }
  bool is_subword() const noexcept { return vocab_size != kByteVocab; }
  std::int32_t bos_token() const noexcept {
    return is_subword() ? kSubwordBos : std::int32_t{255};
  }

  std::size_t attention_window() const noexcept { return window ? window : context; }
  std::size_t effective_local_window() const noexcept {
    if (kind == ArchKind::megabyte) {
      return patch_size;
    }
    return local_window ? local_window : local_dim;
  }
  std::size_t local_layers_pre() const noexcept {
    return kind == ArchKind::megabyte ? 0 : local_layers / 2;
  }
  std::size_t local_layers_post() const noexcept { return local_layers - local_layers_pre(); }

  // Structural checks only; see the factories for the standard relations
  // between context, dimension, and patch size. Throws ConfigError.
  void validate() const;

  // T = D, W = T.
  static ModelConfig make_transformer(std::size_t dim, std::size_t layers,
                                      std::size_t vocab = kByteVocab);
  // T = P D with a sliding window of D.
  static ModelConfig make_window_transformer(std::size_t dim, std::size_t layers,
                                             std::size_t patch);
  // T = P D, T_global = D, L_global = L_local = layers.
  static ModelConfig make_megabyte(std::size_t dim, std::size_t local_dim, std::size_t layers,
                                   std::size_t patch);
  // T_global = D, T = avg_patch T_global, W_local = D_local.
  static ModelConfig make_spacebyte(std::size_t dim, std::size_t local_dim,
                                    std::size_t global_layers, std::size_t local_layers,
                                    std::size_t avg_patch = 6);
  // T_global = D, T = P T_global.
  static ModelConfig make_spacebyte_fixed(std::size_t dim, std::size_t local_dim,
                                          std::size_t global_layers, std::size_t local_layers,
                                          std::size_t patch = 6);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace spacebyte
