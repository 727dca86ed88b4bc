#include "spacebyte/trainer.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spacebyte/accounting.h"
#include "spacebyte/error.h"

namespace spacebyte {

template <typename Real>
void init_params(ParamStore<Real>& params, CounterRng& rng) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSpec& spec = params.spec(i);
    auto data = params.tensor(i).data_mut();
    if (spec.role == ParamRole::norm_gain) {
      std::fill(data.begin(), data.end(), Real(1));
      continue;
    }
    const double sigma = spec.init_std();
    for (auto& x : data) {
      x = static_cast<Real>(sigma * rng.normal());
    }
  }
}

template <typename Real>
void zero_deembedding(ParamStore<Real>& params) {
  const char* name = params.contains("deembed") ? "deembed" : "embed.tokens";
  auto data = params.get(name).data_mut();
  std::fill(data.begin(), data.end(), Real(0));
}

double lr_at_step(double gamma, std::size_t step, std::size_t total_steps,
                  double warmup_fraction) {
  if (total_steps == 0) {
    return 0.0;
  }
  const double s = static_cast<double>(std::min(step, total_steps));
  const double S = static_cast<double>(total_steps);
  const double warm = warmup_fraction * S;
  const double ramp = warm > 0.0 ? std::min(1.0, s / warm) : 1.0;
  return gamma * ramp * std::cos(std::numbers::pi / 2.0 * s / S);
}

template <typename Real>
double clip_grad_norm(ParamStore<Real>& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const Real g : params.tensor(i).grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in " + params.spec(i).name);
      }
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params.tensor(i).grad().empty()) {
        continue;
      }
      for (auto& g : params.tensor(i).grad_mut()) {
        g = static_cast<Real>(static_cast<double>(g) * f);
      }
    }
  }
  return norm;
}

template <typename Real>
AdamW<Real>::AdamW(const ParamStore<Real>& params, const TrainConfig& cfg)
    : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps), wd_(cfg.weight_decay) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    scale_.push_back(params.spec(i).init_std());
    m_.emplace_back(params.tensor(i).numel(), Real(0));
    v_.emplace_back(params.tensor(i).numel(), Real(0));
  }
}

template <typename Real>
void AdamW<Real>::step(ParamStore<Real>& params, double lr) {
  if (params.size() != m_.size()) {
    throw DimensionError("optimizer state does not match the parameter store");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const Real g : params.tensor(i).grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("non-finite gradient in " + params.spec(i).name);
      }
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double lr_eff = lr * scale_[i];
    auto p = params.tensor(i).data_mut();
    const auto g = params.tensor(i).grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g.empty() ? 0.0 : static_cast<double>(g[k]);
      const double mk = beta1_ * static_cast<double>(m[k]) + (1.0 - beta1_) * gk;
      const double vk = beta2_ * static_cast<double>(v[k]) + (1.0 - beta2_) * gk * gk;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      double x = static_cast<double>(p[k]);
      x -= lr_eff * wd_ * x;
      x -= lr_eff * (mk / c1) / (std::sqrt(vk / c2) + eps_);
      p[k] = static_cast<Real>(x);
    }
  }
}

std::size_t steps_for_budget(double flop_budget, double flops_per_byte, std::size_t batch,
                             double bytes_per_sample) {
  const double per_step = 3.0 * flops_per_byte * static_cast<double>(batch) * bytes_per_sample;
  if (!(per_step > 0.0)) {
    throw ConfigError("cannot derive a step count from a zero cost per step");
  }
  return static_cast<std::size_t>(std::floor(flop_budget / per_step));
}

template <typename Real>
EvalResult evaluate(const ModelConfig& cfg, const ParamStore<Real>& params,
                    const std::vector<Sample>& windows, std::size_t batch_size,
                    const std::vector<std::uint32_t>& token_bytes) {
  if (batch_size == 0) {
    throw ConfigError("evaluation batch size must be positive");
  }
  NoGradGuard no_grad;
  EvalResult r;
  std::vector<double> window_nats;
  std::vector<std::uint64_t> window_bytes;
  for (std::size_t w0 = 0; w0 < windows.size(); w0 += batch_size) {
    const std::size_t nb = std::min(batch_size, windows.size() - w0);
    Batch b;
    b.batch = nb;
    b.seq = windows[w0].tokens.size();
    for (std::size_t i = 0; i < nb; ++i) {
      const Sample& s = windows[w0 + i];
      if (s.tokens.size() != b.seq || s.targets.size() != b.seq) {
        throw DimensionError("evaluation windows differ in length");
      }
      b.tokens.insert(b.tokens.end(), s.tokens.begin(), s.tokens.end());
      b.targets.insert(b.targets.end(), s.targets.begin(), s.targets.end());
    }
    const ForwardOutput<Real> out = model_forward(cfg, params, b);
    for (std::size_t i = 0; i < nb; ++i) {
      double nats = 0.0;
      std::uint64_t bytes = 0;
      for (std::size_t t = 0; t < b.seq; ++t) {
        const std::size_t k = i * b.seq + t;
        const std::int32_t tgt = out.effective_targets[k];
        if (b.targets[k] >= 0 && tgt < 0) {
          ++r.masked_targets;
        }
        if (tgt < 0) {
          continue;
        }
        nats += out.nll[k];
        bytes += token_bytes.empty() ? 1 : token_bytes.at(static_cast<std::size_t>(tgt));
        ++r.tokens;
      }
      window_nats.push_back(nats);
      window_bytes.push_back(bytes);
      r.nats += nats;
      r.bytes += bytes;
    }
  }
  r.windows = windows.size();
  if (r.bytes > 0) {
    const BpbEstimate est = pooled_bpb(window_nats, window_bytes);
    r.bpb = est.bpb;
    r.stderr_ = est.stderr_;
  }
  return r;
}

#define SPACEBYTE_INSTANTIATE_TRAINER(Real)                                                 \
  template void init_params(ParamStore<Real>&, CounterRng&);                                \
  template void zero_deembedding(ParamStore<Real>&);                                        \
  template double clip_grad_norm(ParamStore<Real>&, double);                                \
  template class AdamW<Real>;                                                               \
  template EvalResult evaluate(const ModelConfig&, const ParamStore<Real>&,                 \
                               const std::vector<Sample>&, std::size_t,                     \
                               const std::vector<std::uint32_t>&);

SPACEBYTE_INSTANTIATE_TRAINER(float)
SPACEBYTE_INSTANTIATE_TRAINER(double)

}  // namespace spacebyte
