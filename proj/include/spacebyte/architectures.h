#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spacebyte/blocks.h"
#include "spacebyte/model_config.h"
#include "spacebyte/params.h"
#include "spacebyte/rng.h"

namespace spacebyte {

// Where the global blocks run.
struct GlobalRule {
  enum class Kind { spacelike, fixed, always };
  Kind kind = Kind::spacelike;
  std::size_t period = 0;

  static GlobalRule spacelike() { return {Kind::spacelike, 0}; }
  static GlobalRule fixed(std::size_t p) { return {Kind::fixed, p}; }
  static GlobalRule always() { return {Kind::always, 1}; }
};

// The rule a SpaceByte-family config implies.
GlobalRule default_rule(const ModelConfig& cfg);

// Marked positions of one context row under a rule. BOS positions (255)
// are always marked.
std::vector<std::size_t> global_positions(std::span<const std::int32_t> tokens, GlobalRule rule);

// Row-major [batch, seq] token ids. targets is either empty (no loss) or
// the same size, with -1 for ignored positions.
struct Batch {
  std::size_t batch = 1;
  std::size_t seq = 0;
  std::vector<std::int32_t> tokens;
  std::vector<std::int32_t> targets;
};

struct ForwardStats {
  std::size_t patches_used = 0;
  std::size_t patches_overflowed = 0;
  std::size_t padded_global_slots = 0;
};

template <typename Real>
struct ForwardOutput {
  Tensor<Real> logits;  // [batch, seq, V]
  // targets after overflow masking; differs from the input only by -1s.
  std::vector<std::int32_t> effective_targets;
  Tensor<Real> loss;               // undefined when no targets were given
  std::vector<double> nll;         // per position, 0 where ignored
  std::size_t scored_targets = 0;  // count of targets != -1
  ForwardStats stats;
};

std::vector<ParamSpec> model_param_specs(const ModelConfig& cfg);

// Embedding, L windowed blocks, final layer norm, de-embedding (tied to the
// token table for subword configs).
template <typename Real>
ForwardOutput<Real> transformer_lm_forward(const ModelConfig& cfg, const ParamStore<Real>& params,
                                           const Batch& batch);

// Local blocks, global blocks at marked positions, local blocks, de-embedding.
// Contexts with more than global_context marked positions have their targets
// from the first overflowing mark onward set to -1.
template <typename Real>
ForwardOutput<Real> spacebyte_forward(const ModelConfig& cfg, const ParamStore<Real>& params,
                                      const Batch& batch, GlobalRule rule);

// Patch-embedding global model whose outputs feed the next patch's local
// model through a shared D/P -> D_local projection.
template <typename Real>
ForwardOutput<Real> megabyte_forward(const ModelConfig& cfg, const ParamStore<Real>& params,
                                     const Batch& batch);

// Dispatches on cfg.kind.
template <typename Real>
ForwardOutput<Real> model_forward(const ModelConfig& cfg, const ParamStore<Real>& params,
                                  const Batch& batch);

// Config plus parameters. Parameters start at zero; the trainer's
// init_params fills them.
template <typename Real>
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore<Real>& params() noexcept { return params_; }
  const ParamStore<Real>& params() const noexcept { return params_; }

  ForwardOutput<Real> forward(const Batch& batch) const {
    return model_forward(cfg_, params_, batch);
  }

 private:
  ModelConfig cfg_;
  ParamStore<Real> params_;
};

// Autoregressive sampling. prompt must begin with BOS. Stops after max_new
// tokens, when the sequence fills the context, or (SpaceByte kinds) once
// global_context positions are marked. temperature <= 0 decodes greedily.
template <typename Real>
std::vector<std::int32_t> generate(const ModelConfig& cfg, const ParamStore<Real>& params,
                                   std::span<const std::int32_t> prompt, std::size_t max_new,
                                   double temperature, CounterRng& rng);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace spacebyte
