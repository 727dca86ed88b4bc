#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spacebyte/tensor.h"

// Differentiable primitives. Every op checks extents and throws
// DimensionError naming the offending shapes.
namespace spacebyte {

inline constexpr int kIgnoreTarget = -1;
inline constexpr double kNormEps = 1e-5;
inline constexpr double kRopeBase = 10000.0;

// a[..., m, k] x b[k, n] flattens the leading extents of a. When both
// operands have rank >= 3 the batch extents must match or be 1.
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);

// Swaps the last two axes.
template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a);

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& a);

// x[rows, d] + table[r % period, d] for each row r; table needs at least
// `period` rows and only those are used. Adds position embeddings to a
// flattened [batch * period, d] activation.
template <typename Real>
Tensor<Real> add_tiled(const Tensor<Real>& x, const Tensor<Real>& table, std::size_t period);

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape);

// Rows of table[V, d] selected by ids; an id outside [0, V) is an
// InputError.
template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const std::int32_t> ids);

// Along the last axis, max-subtracted.
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x);

// Zero-mean unit-variance normalisation over the last axis, times gain. No
// bias.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                        double eps = kNormEps);

// Exact (erf) GELU.
template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x);

// Rotary position embedding on x[rows, head_dim]. Coordinates (2j, 2j+1) of
// row r rotate by positions[r] * base^(-2j/head_dim). Odd head_dim is a
// ConfigError.
template <typename Real>
Tensor<Real> rope_apply(const Tensor<Real>& x, std::span<const std::int32_t> positions,
                        double base = kRopeBase);

// Mean negative log-likelihood (nats) over targets != -1. logits[..., V]
// flattens to rows matching targets. All targets ignored gives 0 with zero
// gradient. When per_row_nll is given it receives each row's loss (0 for
// ignored rows).
template <typename Real>
Tensor<Real> cross_entropy_masked(const Tensor<Real>& logits,
                                  std::span<const std::int32_t> targets,
                                  std::vector<double>* per_row_nll = nullptr);

// Which keys a query may see. Query t attends keys in
// [max(0, t - window + 1, segment_start(t)), t] where segment_start is
// t - t % segment when segment > 0.
struct AttentionSpan {
  std::size_t window = 0;
  std::size_t segment = 0;

  std::size_t first_key(std::size_t t) const noexcept {
    std::size_t lo = t + 1 > window ? t + 1 - window : 0;
    if (segment > 0) {
      const std::size_t seg_lo = t - t % segment;
      lo = lo > seg_lo ? lo : seg_lo;
    }
    return lo;
  }
};

// Scaled dot-product attention over already-projected q, k, v of shape
// [batch * seq, heads * head_dim]. Scores are scaled by 1/sqrt(head_dim)
// and only the banded causal span is ever computed.
template <typename Real>
Tensor<Real> banded_attention(const Tensor<Real>& q, const Tensor<Real>& k,
                              const Tensor<Real>& v, std::size_t batch, std::size_t seq,
                              std::size_t heads, AttentionSpan span);

// Global-block input gather. Row s of the result holds x[rows[s]] in its
// trailing x.dim(-1) coordinates, with zeros in front, for a width of
// out_dim.
template <typename Real>
Tensor<Real> gather_rows_padded(const Tensor<Real>& x, std::span<const std::size_t> rows,
                                std::size_t out_dim);

// x + scatter of y's trailing x.dim(-1) coordinates into rows[s] for every
// slot with valid[s] != 0.
template <typename Real>
Tensor<Real> scatter_add_trailing(const Tensor<Real>& x, const Tensor<Real>& y,
                                  std::span<const std::size_t> rows,
                                  std::span<const std::uint8_t> valid);

// For x[batch * seq, d]: out[b, t] = x[b, t - shift] when t >= shift, else 0.
template <typename Real>
Tensor<Real> shift_rows(const Tensor<Real>& x, std::size_t batch, std::size_t seq,
                        std::size_t shift);

}  // namespace spacebyte
