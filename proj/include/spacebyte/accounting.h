#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spacebyte/model_config.h"

namespace spacebyte {

// Non-embedding parameter counts. Plain transformers keep everything in
// the global rows (m = m_global); multiscale kinds charge the de-embedding
// to the local model.
struct ParamBreakdown {
  bool multiscale = false;
  std::uint64_t global_attention = 0;
  std::uint64_t global_feed_forward = 0;
  std::uint64_t global_to_local = 0;
  std::uint64_t local_attention = 0;
  std::uint64_t local_feed_forward = 0;
  std::uint64_t deembedding = 0;

  std::uint64_t m_global() const {
    return global_attention + global_feed_forward + (multiscale ? 0 : deembedding);
  }
  std::uint64_t m_local() const {
    return global_to_local + local_attention + local_feed_forward +
           (multiscale ? deembedding : 0);
  }
  std::uint64_t total() const { return m_global() + m_local(); }
};

ParamBreakdown count_params(const ModelConfig& cfg);

struct FlopsReport {
  double flops_per_token = 0.0;
  double bytes_per_token = 1.0;
  double flops_per_byte = 0.0;
  double training_flops_per_byte = 0.0;
};

// Inference cost per token. bytes_per_token is 1 for byte-level models.
// Throws ConfigError if bytes_per_token < 1.
FlopsReport flops_per_byte(const ModelConfig& cfg, double bytes_per_token = 1.0);

struct BpbEstimate {
  double bpb = 0.0;
  double stderr_ = 0.0;
};

// total_nats / (n_bytes ln 2). Throws InputError for n_tokens or n_bytes 0.
double bits_per_byte(double total_nats, std::uint64_t n_tokens, std::uint64_t n_bytes);

// Pooled BPB over windows and the standard error of the per-window values.
BpbEstimate pooled_bpb(const std::vector<double>& window_nats,
                       const std::vector<std::uint64_t>& window_bytes);

enum class BudgetTier { small, large };
BudgetTier parse_tier(const std::string& name);

// Nearest {1, 3/2} x 2^k to 12.5 log2(D / 154); midpoints go down.
// Throws ConfigError for D <= 154.
std::size_t depth_for_dim(std::size_t dim);

// True when x is 2^k or 3 * 2^k.
bool is_half_power_of_two(std::size_t x);

// Every grid point of one architecture at one tier. vocab_size != 256 with
// kind transformer gives the tied subword baseline. avg_patch is the
// context-to-slot ratio (6, or 8 for code).
std::vector<ModelConfig> grid_configs(ArchKind kind, BudgetTier tier,
                                      std::size_t vocab_size = kByteVocab,
                                      std::size_t avg_patch = 6);

// Short identifier such as "spacebyte-D512-Dl384-L12x12-T3072".
std::string config_label(const ModelConfig& cfg);

struct ParetoPoint {
  double flops_per_byte = 0.0;
  double bpb = 0.0;
  std::string id;
};

// Drops dominated points, then keeps the lower convex hull of the rest in
// (log flops, log bpb). Sorted by flops_per_byte. Collinear interior points
// are dropped; exact duplicates keep their first occurrence.
std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points);

// Scatter of all points with the frontier drawn on log-log axes.
std::string pareto_svg(const std::vector<ParetoPoint>& points,
                       const std::vector<ParetoPoint>& frontier);

}  // namespace spacebyte
