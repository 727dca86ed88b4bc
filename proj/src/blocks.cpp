#include "spacebyte/blocks.h"

#include "spacebyte/error.h"

namespace spacebyte {

void AttentionConfig::validate() const {
  if (dim == 0 || head_dim == 0 || dim % head_dim != 0) {
    throw ConfigError("attention: model dimension " + std::to_string(dim) +
                      " is not a multiple of head dimension " + std::to_string(head_dim));
  }
  if (head_dim % 2 != 0) {
    throw ConfigError("attention: head dimension must be even for RoPE, got " +
                      std::to_string(head_dim));
  }
  if (window == 0) {
    throw ConfigError("attention: window must be >= 1");
  }
}

template <typename Real>
BlockWeights<Real> BlockWeights<Real>::bind(const ParamStore<Real>& store,
                                            const std::string& prefix) {
  BlockWeights w;
  w.ln_attn = store.get(prefix + ".ln_attn");
  w.wq = store.get(prefix + ".attn.wq");
  w.wk = store.get(prefix + ".attn.wk");
  w.wv = store.get(prefix + ".attn.wv");
  w.wo = store.get(prefix + ".attn.wo");
  w.q_norm = store.get(prefix + ".attn.q_norm");
  w.k_norm = store.get(prefix + ".attn.k_norm");
  w.ln_ff = store.get(prefix + ".ln_ff");
  w.w_in = store.get(prefix + ".ff.w_in");
  w.w_out = store.get(prefix + ".ff.w_out");
  return w;
}

std::vector<ParamSpec> block_param_specs(const std::string& prefix, std::size_t dim,
                                         std::size_t head_dim, std::size_t ff_mult) {
  const std::size_t ff = ff_mult * dim;
  return {
      {prefix + ".ln_attn", {dim}, ParamRole::norm_gain, 0},
      {prefix + ".attn.wq", {dim, dim}, ParamRole::linear, dim},
      {prefix + ".attn.wk", {dim, dim}, ParamRole::linear, dim},
      {prefix + ".attn.wv", {dim, dim}, ParamRole::linear, dim},
      {prefix + ".attn.wo", {dim, dim}, ParamRole::linear, dim},
      {prefix + ".attn.q_norm", {head_dim}, ParamRole::norm_gain, 0},
      {prefix + ".attn.k_norm", {head_dim}, ParamRole::norm_gain, 0},
      {prefix + ".ln_ff", {dim}, ParamRole::norm_gain, 0},
      {prefix + ".ff.w_in", {dim, ff}, ParamRole::linear, dim},
      {prefix + ".ff.w_out", {ff, dim}, ParamRole::linear, ff},
  };
}

namespace {

template <typename Real>
Tensor<Real> project_normalize_rotate(const Tensor<Real>& x, const Tensor<Real>& w,
                                      const Tensor<Real>& gain, SequenceLayout layout,
                                      const AttentionConfig& cfg,
                                      const std::vector<std::int32_t>& positions) {
  const std::size_t rows = layout.batch * layout.seq;
  Tensor<Real> p = matmul(x, w);
  Tensor<Real> per_head = reshape(p, {rows * cfg.heads(), cfg.head_dim});
  per_head = layer_norm(per_head, gain);
  per_head = rope_apply(per_head, positions);
  return reshape(per_head, {rows, cfg.dim});
}

}  // namespace

template <typename Real>
Tensor<Real> causal_window_attention(const Tensor<Real>& x, SequenceLayout layout,
                                     const AttentionConfig& cfg, const BlockWeights<Real>& w) {
  cfg.validate();
  const std::size_t rows = layout.batch * layout.seq;
  if (x.rank() != 2 || x.dim(0) != rows || x.dim(1) != cfg.dim) {
    throw DimensionError("attention: input " + shape_str(x.shape()) + " is not [" +
                         std::to_string(rows) + ", " + std::to_string(cfg.dim) + "]");
  }
  const std::size_t heads = cfg.heads();
  std::vector<std::int32_t> positions(rows * heads);
  for (std::size_t r = 0; r < rows * heads; ++r) {
    positions[r] = static_cast<std::int32_t>((r / heads) % layout.seq);
  }
  Tensor<Real> q = project_normalize_rotate(x, w.wq, w.q_norm, layout, cfg, positions);
  Tensor<Real> k = project_normalize_rotate(x, w.wk, w.k_norm, layout, cfg, positions);
  Tensor<Real> v = matmul(x, w.wv);
  Tensor<Real> att = banded_attention(q, k, v, layout.batch, layout.seq, heads,
                                      AttentionSpan{cfg.window, cfg.segment});
  return matmul(att, w.wo);
}

template <typename Real>
Tensor<Real> transformer_block(const Tensor<Real>& x, SequenceLayout layout,
                               const AttentionConfig& cfg, const BlockWeights<Real>& w) {
  Tensor<Real> h = add(x, causal_window_attention(layer_norm(x, w.ln_attn), layout, cfg, w));
  Tensor<Real> ff = matmul(gelu(matmul(layer_norm(h, w.ln_ff), w.w_in)), w.w_out);
  return add(h, ff);
}

template struct BlockWeights<float>;
template struct BlockWeights<double>;
template Tensor<float> causal_window_attention(const Tensor<float>&, SequenceLayout,
                                               const AttentionConfig&,
                                               const BlockWeights<float>&);
template Tensor<double> causal_window_attention(const Tensor<double>&, SequenceLayout,
                                                const AttentionConfig&,
                                                const BlockWeights<double>&);
template Tensor<float> transformer_block(const Tensor<float>&, SequenceLayout,
                                         const AttentionConfig&, const BlockWeights<float>&);
template Tensor<double> transformer_block(const Tensor<double>&, SequenceLayout,
                                          const AttentionConfig&, const BlockWeights<double>&);

}  // namespace spacebyte
