#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spacebyte/ops.h"
#include "spacebyte/params.h"

namespace spacebyte {

inline constexpr std::size_t kDefaultHeadDim = 64;
inline constexpr std::size_t kFeedForwardMult = 4;

struct AttentionConfig {
  std::size_t dim = 0;
  std::size_t head_dim = kDefaultHeadDim;
  // Positions each query may look back over, itself included.
  std::size_t window = 1;
  // When nonzero, attention is also confined to aligned segments of this
  // length (MegaByte's per-patch local model).
  std::size_t segment = 0;

  std::size_t heads() const { return dim / head_dim; }
  // dim divisible by head_dim, even head_dim, window >= 1.
  void validate() const;
};

template <typename Real>
struct BlockWeights {
  Tensor<Real> ln_attn;  // [D]
  Tensor<Real> wq, wk, wv, wo;  // [D, D]
  Tensor<Real> q_norm, k_norm;  // [head_dim]
  Tensor<Real> ln_ff;  // [D]
  Tensor<Real> w_in;   // [D, ff_mult * D]
  Tensor<Real> w_out;  // [ff_mult * D, D]

  static BlockWeights bind(const ParamStore<Real>& store, const std::string& prefix);
};

// Parameter layout of one block under `prefix`: 12 D^2 linear weights plus
// 2 D + 2 head_dim gains.
std::vector<ParamSpec> block_param_specs(const std::string& prefix, std::size_t dim,
                                         std::size_t head_dim,
                                         std::size_t ff_mult = kFeedForwardMult);

// Row layout for x: [batch * seq, D], row-major by (batch, position).
struct SequenceLayout {
  std::size_t batch = 1;
  std::size_t seq = 1;
};

// Multi-head attention: q/k/v projections, per-head qk-layernorm, RoPE on
// q and k, banded causal softmax attention, output projection.
template <typename Real>
Tensor<Real> causal_window_attention(const Tensor<Real>& x, SequenceLayout layout,
                                     const AttentionConfig& cfg, const BlockWeights<Real>& w);

// Pre-LN block: h = x + Attn(LN(x)); out = h + W_out gelu(W_in LN(h)).
template <typename Real>
Tensor<Real> transformer_block(const Tensor<Real>& x, SequenceLayout layout,
                               const AttentionConfig& cfg, const BlockWeights<Real>& w);

}  // namespace spacebyte
