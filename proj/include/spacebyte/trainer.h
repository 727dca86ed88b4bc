#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spacebyte/architectures.h"
#include "spacebyte/data.h"
#include "spacebyte/params.h"
#include "spacebyte/rng.h"

namespace spacebyte {

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr = 0.000625;  // 0.005 / sqrt(64)
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double eps = 1e-8;
  double warmup_fraction = 0.01;
  // Either a step count or a training FLOP budget; with a budget the step
  // count is floor(budget / (3 * flops_per_byte * batch * bytes_per_sample)).
  std::size_t steps = 0;
  double flop_budget = 0.0;
  std::size_t eval_every = 0;  // 0: evaluate at the start and end only
  std::uint64_t seed = 0;
  bool zero_deembed = false;   // start from uniform predictions

  bool operator==(const TrainConfig&) const = default;
};

// Normal(0, sigma_init^2) draws for every parameter; norm gains are set to 1.
template <typename Real>
void init_params(ParamStore<Real>& params, CounterRng& rng);

// Zeroes the output projection (the token table for tied models) so that
// every logit is 0.
template <typename Real>
void zero_deembedding(ParamStore<Real>& params);

// gamma * min(1, s / (w S)) * cos(pi s / (2 S)); 0 when S is 0.
double lr_at_step(double gamma, std::size_t step, std::size_t total_steps,
                  double warmup_fraction = 0.01);

// Rescales all gradients in place so their global L2 norm is at most
// max_norm and returns the norm before clipping. Throws NumericError when
// any gradient is not finite.
template <typename Real>
double clip_grad_norm(ParamStore<Real>& params, double max_norm);

// Decoupled weight decay Adam with bias correction. Each parameter's step
// is scaled by its sigma_init.
template <typename Real>
class AdamW {
 public:
  AdamW(const ParamStore<Real>& params, const TrainConfig& cfg);

  // Uses the gradients currently stored in params. Throws NumericError for
  // non-finite gradients before touching any parameter.
  void step(ParamStore<Real>& params, double lr);

  std::size_t steps_taken() const noexcept { return t_; }

 private:
  double beta1_, beta2_, eps_, wd_;
  std::vector<double> scale_;
  std::vector<std::vector<Real>> m_, v_;
  std::size_t t_ = 0;
};

std::size_t steps_for_budget(double flop_budget, double flops_per_byte, std::size_t batch,
                             double bytes_per_sample);

struct EvalResult {
  double bpb = 0.0;
  double stderr_ = 0.0;
  double nats = 0.0;
  std::uint64_t tokens = 0;
  std::uint64_t bytes = 0;
  std::size_t windows = 0;
  std::uint64_t masked_targets = 0;  // dropped by patch overflow
};

// Scores every window. token_bytes[id] is the byte length of token id; an
// empty table means one byte per token.
template <typename Real>
EvalResult evaluate(const ModelConfig& cfg, const ParamStore<Real>& params,
                    const std::vector<Sample>& windows, std::size_t batch_size,
                    const std::vector<std::uint32_t>& token_bytes = {});

}  // namespace spacebyte
