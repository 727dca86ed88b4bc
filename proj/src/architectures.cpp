#include "spacebyte/architectures.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "spacebyte/error.h"
#include "spacebyte/segmenter.h"

namespace spacebyte {
namespace {

void append(std::vector<ParamSpec>& into, std::vector<ParamSpec> more) {
  into.insert(into.end(), std::make_move_iterator(more.begin()),
              std::make_move_iterator(more.end()));
}

void append_stack(std::vector<ParamSpec>& into, const std::string& prefix, std::size_t count,
                  std::size_t dim, const ModelConfig& cfg) {
  for (std::size_t i = 0; i < count; ++i) {
    append(into, block_param_specs(prefix + "." + std::to_string(i), dim, cfg.head_dim,
                                   cfg.ff_mult));
  }
}

template <typename Real>
Tensor<Real> run_stack(Tensor<Real> x, const ParamStore<Real>& params, const std::string& prefix,
                       std::size_t count, SequenceLayout layout, const AttentionConfig& att) {
  for (std::size_t i = 0; i < count; ++i) {
    x = transformer_block(x, layout, att,
                          BlockWeights<Real>::bind(params, prefix + "." + std::to_string(i)));
  }
  return x;
}

void check_batch(const ModelConfig& cfg, const Batch& batch) {
  if (batch.batch == 0 || batch.seq == 0 || batch.tokens.size() != batch.batch * batch.seq) {
    throw DimensionError("batch of " + std::to_string(batch.tokens.size()) +
                         " tokens does not match [" + std::to_string(batch.batch) + ", " +
                         std::to_string(batch.seq) + "]");
  }
  if (batch.seq > cfg.context) {
    throw InputError("sequence length " + std::to_string(batch.seq) + " exceeds context " +
                     std::to_string(cfg.context));
  }
  if (!batch.targets.empty() && batch.targets.size() != batch.tokens.size()) {
    throw DimensionError("targets size " + std::to_string(batch.targets.size()) +
                         " does not match tokens size " + std::to_string(batch.tokens.size()));
  }
  for (std::size_t i = 0; i < batch.tokens.size(); ++i) {
    const std::int32_t t = batch.tokens[i];
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
      throw InputError("token " + std::to_string(t) + " at index " + std::to_string(i) +
                       " is outside the vocabulary of size " + std::to_string(cfg.vocab_size));
    }
  }
}

template <typename Real>
void finish(ForwardOutput<Real>& out, Tensor<Real> logits, const Batch& batch,
            std::vector<std::int32_t> targets) {
  const std::size_t vocab = logits.dim(-1);
  if (!targets.empty()) {
    out.loss = cross_entropy_masked(logits, targets, &out.nll);
    out.scored_targets = static_cast<std::size_t>(
        std::count_if(targets.begin(), targets.end(), [](std::int32_t t) { return t >= 0; }));
  }
  out.effective_targets = std::move(targets);
  out.logits = reshape(logits, {batch.batch, batch.seq, vocab});
}

}  // namespace

GlobalRule default_rule(const ModelConfig& cfg) {
  if (cfg.kind == ArchKind::spacebyte_fixed) {
    return GlobalRule::fixed(cfg.patch_size);
  }
  return GlobalRule::spacelike();
}

std::vector<std::size_t> global_positions(std::span<const std::int32_t> tokens,
                                          GlobalRule rule) {
  std::vector<std::size_t> out;
  bool prev_spacelike = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::int32_t tok = tokens[i];
    const bool bos = tok == kBos;
    bool use = false;
    switch (rule.kind) {
      case GlobalRule::Kind::spacelike: {
        const bool spacelike = is_spacelike(static_cast<std::uint8_t>(tok));
        use = spacelike && !prev_spacelike;
        prev_spacelike = spacelike;
        break;
      }
      case GlobalRule::Kind::fixed:
        use = i % rule.period == 0;
        break;
      case GlobalRule::Kind::always:
        use = true;
        break;
    }
    if (use || bos) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<ParamSpec> model_param_specs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs;
  const std::size_t V = cfg.vocab_size;
  switch (cfg.kind) {
    case ArchKind::transformer:
    case ArchKind::window_transformer: {
      specs.push_back({"embed.tokens", {V, cfg.dim},
                       cfg.tie_embeddings ? ParamRole::tied_embedding : ParamRole::embedding, 0});
      specs.push_back({"embed.pos", {cfg.context, cfg.dim}, ParamRole::position, 0});
      append_stack(specs, "blocks", cfg.layers, cfg.dim, cfg);
      specs.push_back({"ln_f", {cfg.dim}, ParamRole::norm_gain, 0});
      if (!cfg.tie_embeddings) {
        specs.push_back({"deembed", {cfg.dim, V}, ParamRole::linear, cfg.dim});
      }
      break;
    }
    case ArchKind::spacebyte:
    case ArchKind::spacebyte_fixed: {
      specs.push_back({"embed.tokens", {V, cfg.local_dim}, ParamRole::embedding, 0});
      specs.push_back({"embed.local_pos", {cfg.context, cfg.local_dim}, ParamRole::position, 0});
      append_stack(specs, "local_pre", cfg.local_layers_pre(), cfg.local_dim, cfg);
      specs.push_back({"global.pos", {cfg.global_context, cfg.dim}, ParamRole::position, 0});
      append_stack(specs, "global", cfg.global_layers, cfg.dim, cfg);
      append_stack(specs, "local_post", cfg.local_layers_post(), cfg.local_dim, cfg);
      specs.push_back({"ln_f", {cfg.local_dim}, ParamRole::norm_gain, 0});
      specs.push_back({"deembed", {cfg.local_dim, V}, ParamRole::linear, cfg.local_dim});
      break;
    }
    case ArchKind::megabyte: {
      const std::size_t chunk = cfg.dim / cfg.patch_size;
      specs.push_back({"global.embed.tokens", {V, chunk}, ParamRole::embedding, 0});
      specs.push_back({"global.pos", {cfg.global_context, cfg.dim}, ParamRole::position, 0});
      append_stack(specs, "global", cfg.global_layers, cfg.dim, cfg);
      specs.push_back({"global_to_local", {chunk, cfg.local_dim}, ParamRole::linear, chunk});
      specs.push_back({"local.embed.tokens", {V, cfg.local_dim}, ParamRole::embedding, 0});
      specs.push_back({"local.pos", {cfg.context, cfg.local_dim}, ParamRole::position, 0});
      append_stack(specs, "local", cfg.local_layers, cfg.local_dim, cfg);
      specs.push_back({"ln_f", {cfg.local_dim}, ParamRole::norm_gain, 0});
      specs.push_back({"deembed", {cfg.local_dim, V}, ParamRole::linear, cfg.local_dim});
      break;
    }
  }
  return specs;
}

template <typename Real>
ForwardOutput<Real> transformer_lm_forward(const ModelConfig& cfg, const ParamStore<Real>& params,
                                           const Batch& batch) {
  if (cfg.kind != ArchKind::transformer && cfg.kind != ArchKind::window_transformer) {
    throw ConfigError("transformer_lm_forward called with kind " +
                      std::string(kind_name(cfg.kind)));
  }
  check_batch(cfg, batch);
  const SequenceLayout layout{batch.batch, batch.seq};
  const AttentionConfig att{cfg.dim, cfg.head_dim, cfg.attention_window(), 0};

  const Tensor<Real>& table = params.get("embed.tokens");
  Tensor<Real> x = embedding(table, batch.tokens);
  x = add_tiled(x, params.get("embed.pos"), batch.seq);
  x = run_stack(x, params, "blocks", cfg.layers, layout, att);
  x = layer_norm(x, params.get("ln_f"));
  Tensor<Real> logits =
      cfg.tie_embeddings ? matmul(x, transpose(table)) : matmul(x, params.get("deembed"));

  ForwardOutput<Real> out;
  finish(out, logits, batch, batch.targets);
  return out;
}

template <typename Real>
ForwardOutput<Real> spacebyte_forward(const ModelConfig& cfg, const ParamStore<Real>& params,
                                      const Batch& batch, GlobalRule rule) {
  if (cfg.kind != ArchKind::spacebyte && cfg.kind != ArchKind::spacebyte_fixed) {
    throw ConfigError("spacebyte_forward called with kind " + std::string(kind_name(cfg.kind)));
  }
  if (rule.kind == GlobalRule::Kind::fixed && rule.period < 1) {
    throw ConfigError("fixed insertion rule needs a period >= 1");
  }
  check_batch(cfg, batch);
  const std::size_t B = batch.batch;
  const std::size_t T = batch.seq;
  const std::size_t Tg = cfg.global_context;
  const SequenceLayout local_layout{B, T};
  const AttentionConfig local_att{cfg.local_dim, cfg.head_dim, cfg.effective_local_window(), 0};
  const AttentionConfig global_att{cfg.dim, cfg.head_dim, Tg, 0};

  Tensor<Real> x = embedding(params.get("embed.tokens"), batch.tokens);
  x = add_tiled(x, params.get("embed.local_pos"), T);
  x = run_stack(x, params, "local_pre", cfg.local_layers_pre(), local_layout, local_att);

  ForwardOutput<Real> out;
  std::vector<std::int32_t> targets = batch.targets;
  // Global slot s of row b reads local row global_rows[b * Tg + s]; unused
  // slots read the row's last position and their outputs are dropped.
  std::vector<std::size_t> global_rows(B * Tg);
  std::vector<std::uint8_t> slot_used(B * Tg, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const std::span<const std::int32_t> row(batch.tokens.data() + b * T, T);
    const std::vector<std::size_t> idx = global_positions(row, rule);
    if (idx.size() > Tg) {
      if (!targets.empty()) {
        std::fill(targets.begin() + static_cast<std::ptrdiff_t>(b * T + idx[Tg]),
                  targets.begin() + static_cast<std::ptrdiff_t>((b + 1) * T), kIgnoreTarget);
      }
      out.stats.patches_overflowed += idx.size() - Tg;
    }
    const std::size_t used = std::min(idx.size(), Tg);
    out.stats.patches_used += used;
    out.stats.padded_global_slots += Tg - used;
    for (std::size_t s = 0; s < Tg; ++s) {
      global_rows[b * Tg + s] = b * T + (s < used ? idx[s] : T - 1);
      slot_used[b * Tg + s] = s < used ? 1 : 0;
    }
  }

  // Widen D_local -> D by zero-prepending; local activations occupy the
  // trailing coordinates.
  Tensor<Real> y = gather_rows_padded(x, global_rows, cfg.dim);
  y = add_tiled(y, params.get("global.pos"), Tg);
  y = run_stack(y, params, "global", cfg.global_layers, SequenceLayout{B, Tg}, global_att);
  // Truncate back to the trailing D_local coordinates and add into the
  // local stream at the real slots only.
  x = scatter_add_trailing(x, y, global_rows, slot_used);

  x = run_stack(x, params, "local_post", cfg.local_layers_post(), local_layout, local_att);
  x = layer_norm(x, params.get("ln_f"));
  Tensor<Real> logits = matmul(x, params.get("deembed"));
  finish(out, logits, batch, std::move(targets));
  return out;
}

template <typename Real>
ForwardOutput<Real> megabyte_forward(const ModelConfig& cfg, const ParamStore<Real>& params,
                                     const Batch& batch) {
  if (cfg.kind != ArchKind::megabyte) {
    throw ConfigError("megabyte_forward called with kind " + std::string(kind_name(cfg.kind)));
  }
  check_batch(cfg, batch);
  const std::size_t B = batch.batch;
  const std::size_t T = batch.seq;
  const std::size_t P = cfg.patch_size;
  if (T % P != 0) {
    throw DimensionError("megabyte sequence length " + std::to_string(T) +
                         " is not a multiple of patch size " + std::to_string(P));
  }
  const std::size_t Tg = T / P;
  const std::size_t chunk = cfg.dim / P;

  // Global model over patch vectors: P byte embeddings of width D/P each.
  Tensor<Real> g = embedding(params.get("global.embed.tokens"), batch.tokens);
  g = reshape(g, {B * Tg, cfg.dim});
  g = add_tiled(g, params.get("global.pos"), Tg);
  g = run_stack(g, params, "global", cfg.global_layers, SequenceLayout{B, Tg},
                AttentionConfig{cfg.dim, cfg.head_dim, Tg, 0});

  // Chunk j of patch k's global output conditions byte j of patch k + 1.
  Tensor<Real> cond = reshape(g, {B * T, chunk});
  cond = matmul(cond, params.get("global_to_local"));
  cond = shift_rows(cond, B, T, P);

  Tensor<Real> x = embedding(params.get("local.embed.tokens"), batch.tokens);
  x = add_tiled(x, params.get("local.pos"), T);
  x = add(x, cond);
  x = run_stack(x, params, "local", cfg.local_layers, SequenceLayout{B, T},
                AttentionConfig{cfg.local_dim, cfg.head_dim, P, P});
  x = layer_norm(x, params.get("ln_f"));
  Tensor<Real> logits = matmul(x, params.get("deembed"));

  ForwardOutput<Real> out;
  out.stats.patches_used = B * Tg;
  finish(out, logits, batch, batch.targets);
  return out;
}

template <typename Real>
ForwardOutput<Real> model_forward(const ModelConfig& cfg, const ParamStore<Real>& params,
                                  const Batch& batch) {
  switch (cfg.kind) {
    case ArchKind::transformer:
    case ArchKind::window_transformer:
      return transformer_lm_forward(cfg, params, batch);
    case ArchKind::spacebyte:
    case ArchKind::spacebyte_fixed:
      return spacebyte_forward(cfg, params, batch, default_rule(cfg));
    case ArchKind::megabyte:
      return megabyte_forward(cfg, params, batch);
  }
  throw ConfigError("unknown architecture kind");
}

template <typename Real>
Model<Real>::Model(ModelConfig cfg) : cfg_(cfg), params_(model_param_specs(cfg)) {}

template <typename Real>
std::vector<std::int32_t> generate(const ModelConfig& cfg, const ParamStore<Real>& params,
                                   std::span<const std::int32_t> prompt, std::size_t max_new,
                                   double temperature, CounterRng& rng) {
  if (prompt.empty() || prompt.front() != cfg.bos_token()) {
    throw InputError("prompt must begin with BOS");
  }
  if (prompt.size() > cfg.context) {
    throw InputError("prompt of " + std::to_string(prompt.size()) +
                     " tokens exceeds the context of " + std::to_string(cfg.context));
  }
  const bool patch_limited = cfg.kind == ArchKind::spacebyte || cfg.kind == ArchKind::spacebyte_fixed;
  const GlobalRule rule = default_rule(cfg);
  std::vector<std::int32_t> seq(prompt.begin(), prompt.end());
  std::vector<std::int32_t> generated;
  NoGradGuard no_grad;
  while (generated.size() < max_new && seq.size() < cfg.context) {
    if (patch_limited && global_positions(seq, rule).size() >= cfg.global_context) {
      break;
    }
    Batch b;
    b.batch = 1;
    b.seq = seq.size();
    if (cfg.kind == ArchKind::megabyte) {
      b.seq = (seq.size() + cfg.patch_size - 1) / cfg.patch_size * cfg.patch_size;
    }
    b.tokens = seq;
    b.tokens.resize(b.seq, 0);
    const ForwardOutput<Real> out = model_forward(cfg, params, b);
    const std::size_t V = cfg.vocab_size;
    const Real* row = out.logits.data().data() + (seq.size() - 1) * V;
    std::int32_t next = 0;
    if (temperature <= 0.0) {
      next = static_cast<std::int32_t>(std::max_element(row, row + V) - row);
    } else {
      const double mx = static_cast<double>(*std::max_element(row, row + V));
      std::vector<double> w(V);
      double z = 0.0;
      for (std::size_t j = 0; j < V; ++j) {
        w[j] = std::exp((static_cast<double>(row[j]) - mx) / temperature);
        z += w[j];
      }
      double u = rng.uniform() * z;
      next = static_cast<std::int32_t>(V - 1);
      for (std::size_t j = 0; j < V; ++j) {
        u -= w[j];
        if (u < 0.0) {
          next = static_cast<std::int32_t>(j);
          break;
        }
      }
    }
    seq.push_back(next);
    generated.push_back(next);
  }
  return generated;
}

#define SPACEBYTE_INSTANTIATE_ARCH(Real)                                                       \
  template ForwardOutput<Real> transformer_lm_forward(const ModelConfig&,                      \
                                                      const ParamStore<Real>&, const Batch&);  \
  template ForwardOutput<Real> spacebyte_forward(const ModelConfig&, const ParamStore<Real>&,   \
                                                 const Batch&, GlobalRule);                    \
  template ForwardOutput<Real> megabyte_forward(const ModelConfig&, const ParamStore<Real>&,    \
                                                const Batch&);                                 \
  template ForwardOutput<Real> model_forward(const ModelConfig&, const ParamStore<Real>&,       \
                                             const Batch&);                                    \
  template std::vector<std::int32_t> generate(const ModelConfig&, const ParamStore<Real>&,      \
                                              std::span<const std::int32_t>, std::size_t,      \
                                              double, CounterRng&);                            \
  template class Model<Real>;

SPACEBYTE_INSTANTIATE_ARCH(float)
SPACEBYTE_INSTANTIATE_ARCH(double)

}  // namespace spacebyte
