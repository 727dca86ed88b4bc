#include "spacebyte/accounting.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "spacebyte/error.h"

namespace spacebyte {
namespace {

std::uint64_t u(std::size_t x) { return static_cast<std::uint64_t>(x); }

// Sign of the turn o -> a -> b.
double cross(double ox, double oy, double ax, double ay, double bx, double by) {
  return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox);
}

}  // namespace

ParamBreakdown count_params(const ModelConfig& cfg) {
  ParamBreakdown p;
  const std::uint64_t e = u(cfg.ff_mult);
  const std::uint64_t V = u(cfg.vocab_size);
  const std::uint64_t D = u(cfg.dim);
  const std::uint64_t Dl = u(cfg.local_dim);
  switch (cfg.kind) {
    case ArchKind::transformer:
    case ArchKind::window_transformer:
      p.global_attention = u(cfg.layers) * 4 * D * D;
      p.global_feed_forward = u(cfg.layers) * 2 * e * D * D;
      p.deembedding = D * V;
      break;
    case ArchKind::megabyte:
      p.multiscale = true;
      p.global_attention = u(cfg.global_layers) * 4 * D * D;
      p.global_feed_forward = u(cfg.global_layers) * 2 * e * D * D;
      p.global_to_local = Dl * (D / u(cfg.patch_size));
      p.local_attention = u(cfg.local_layers) * 4 * Dl * Dl;
      p.local_feed_forward = u(cfg.local_layers) * 2 * e * Dl * Dl;
      p.deembedding = Dl * V;
      break;
    case ArchKind::spacebyte:
    case ArchKind::spacebyte_fixed:
      p.multiscale = true;
      p.global_attention = u(cfg.global_layers) * 4 * D * D;
      p.global_feed_forward = u(cfg.global_layers) * 2 * e * D * D;
      p.local_attention = u(cfg.local_layers) * 4 * Dl * Dl;
      p.local_feed_forward = u(cfg.local_layers) * 2 * e * Dl * Dl;
      p.deembedding = Dl * V;
      break;
  }
  return p;
}

FlopsReport flops_per_byte(const ModelConfig& cfg, double bytes_per_token) {
  if (!(bytes_per_token >= 1.0)) {
    throw ConfigError("bytes_per_token must be at least 1");
  }
  const ParamBreakdown p = count_params(cfg);
  const double D = static_cast<double>(cfg.dim);
  const double Dl = static_cast<double>(cfg.local_dim);
  const double T = static_cast<double>(cfg.context);
  double f = 0.0;
  switch (cfg.kind) {
    case ArchKind::transformer:
    case ArchKind::window_transformer:
      f = 2.0 * static_cast<double>(p.m_global()) +
          2.0 * static_cast<double>(cfg.layers) *
              (2.0 * static_cast<double>(cfg.attention_window()) * D);
      break;
    case ArchKind::megabyte: {
      const double P = static_cast<double>(cfg.patch_size);
      f = 2.0 * static_cast<double>(p.m_global()) / P +
          2.0 * static_cast<double>(cfg.global_layers) * (2.0 * (T / P) * D) / P +
          2.0 * static_cast<double>(p.m_local()) +
          2.0 * static_cast<double>(cfg.local_layers) * (2.0 * P * Dl);
      break;
    }
    case ArchKind::spacebyte:
    case ArchKind::spacebyte_fixed: {
      const double Tg = static_cast<double>(cfg.global_context);
      const double Wl = static_cast<double>(cfg.effective_local_window());
      f = 2.0 * static_cast<double>(p.m_global()) * (Tg / T) +
          2.0 * static_cast<double>(cfg.global_layers) * (2.0 * Tg * D) * (Tg / T) +
          2.0 * static_cast<double>(p.m_local()) +
          2.0 * static_cast<double>(cfg.local_layers) * (2.0 * Wl * Dl);
      break;
    }
  }
  FlopsReport r;
  r.flops_per_token = f;
  r.bytes_per_token = bytes_per_token;
  r.flops_per_byte = f / bytes_per_token;
  r.training_flops_per_byte = 3.0 * r.flops_per_byte;
  return r;
}

double bits_per_byte(double total_nats, std::uint64_t n_tokens, std::uint64_t n_bytes) {
  if (n_tokens == 0 || n_bytes == 0) {
    throw InputError("bits_per_byte needs at least one token and one byte");
  }
  const double xe = total_nats / static_cast<double>(n_tokens);
  return xe * static_cast<double>(n_tokens) / (static_cast<double>(n_bytes) * std::log(2.0));
}

BpbEstimate pooled_bpb(const std::vector<double>& window_nats,
                       const std::vector<std::uint64_t>& window_bytes) {
  if (window_nats.size() != window_bytes.size()) {
    throw DimensionError("window nats and byte counts differ in length");
  }
  BpbEstimate est;
  double nats = 0.0;
  std::uint64_t bytes = 0;
  std::vector<double> per;
  for (std::size_t i = 0; i < window_nats.size(); ++i) {
    if (window_bytes[i] == 0) {
      continue;
    }
    nats += window_nats[i];
    bytes += window_bytes[i];
    per.push_back(window_nats[i] / (static_cast<double>(window_bytes[i]) * std::log(2.0)));
  }
  if (bytes == 0) {
    throw InputError("no scored bytes to compute bits per byte");
  }
  est.bpb = nats / (static_cast<double>(bytes) * std::log(2.0));
  if (per.size() > 1) {
    double mean = 0.0;
    for (double x : per) {
      mean += x;
    }
    mean /= static_cast<double>(per.size());
    double ss = 0.0;
    for (double x : per) {
      ss += (x - mean) * (x - mean);
    }
    const double n = static_cast<double>(per.size());
    est.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return est;
}

BudgetTier parse_tier(const std::string& name) {
  if (name == "small") {
    return BudgetTier::small;
  }
  if (name == "large") {
    return BudgetTier::large;
  }
  throw ConfigError("unknown tier '" + name + "' (expected small or large)");
}

bool is_half_power_of_two(std::size_t x) {
  if (x == 0) {
    return false;
  }
  while (x % 2 == 0) {
    x /= 2;
  }
  return x == 1 || x == 3;
}

std::size_t depth_for_dim(std::size_t dim) {
  if (dim <= 154) {
    throw ConfigError("depth rule needs D > 154, got " + std::to_string(dim));
  }
  const double target = 12.5 * std::log2(static_cast<double>(dim) / 154.0);
  // Candidates 2^k and 3 * 2^(k-1), in increasing order.
  std::size_t best = 1;
  double best_dist = std::abs(target - 1.0);
  for (std::size_t p = 1; p <= (std::size_t{1} << 40); p *= 2) {
    for (const std::size_t c : {p, p * 3 / 2}) {
      if (c == 0 || c <= best) {
        continue;
      }
      const double dist = std::abs(target - static_cast<double>(c));
      if (dist < best_dist) {
        best = c;
        best_dist = dist;
      }
    }
    if (static_cast<double>(p) > 2.0 * target) {
      break;
    }
  }
  return best;
}

std::vector<ModelConfig> grid_configs(ArchKind kind, BudgetTier tier, std::size_t vocab_size,
                                      std::size_t avg_patch) {
  const std::vector<std::size_t> dims = tier == BudgetTier::small
                                            ? std::vector<std::size_t>{384, 512, 768}
                                            : std::vector<std::size_t>{512, 768, 1024};
  const std::size_t local_floor = tier == BudgetTier::small ? 256 : 384;
  std::vector<ModelConfig> out;
  for (const std::size_t D : dims) {
    const std::size_t LD = depth_for_dim(D);
    if (kind == ArchKind::transformer || kind == ArchKind::window_transformer) {
      for (const std::size_t L : {LD / 2, LD}) {
        out.push_back(kind == ArchKind::transformer
                          ? ModelConfig::make_transformer(D, L, vocab_size)
                          : ModelConfig::make_window_transformer(D, L, avg_patch));
      }
      continue;
    }
    const bool pow2 = (D & (D - 1)) == 0;
    std::vector<std::size_t> locals = {D / 2, pow2 ? 3 * D / 4 : 2 * D / 3};
    const bool lpow2 = (LD & (LD - 1)) == 0;
    const std::vector<std::size_t> depths = {lpow2 ? 3 * LD / 8 : LD / 3, LD / 2};
    for (const std::size_t Dl : locals) {
      if (Dl < local_floor) {
        continue;
      }
      for (const std::size_t L : depths) {
        switch (kind) {
          case ArchKind::megabyte:
            for (const std::size_t P : {std::size_t{4}, std::size_t{8}}) {
              out.push_back(ModelConfig::make_megabyte(D, Dl, L, P));
            }
            break;
          case ArchKind::spacebyte:
            out.push_back(ModelConfig::make_spacebyte(D, Dl, L, L, avg_patch));
            break;
          case ArchKind::spacebyte_fixed:
            out.push_back(ModelConfig::make_spacebyte_fixed(D, Dl, L, L, avg_patch));
            break;
          default:
            break;
        }
      }
    }
  }
  return out;
}

std::string config_label(const ModelConfig& cfg) {
  std::ostringstream s;
  if (cfg.is_subword()) {
    s << "subword";
  } else {
    s << kind_name(cfg.kind);
  }
  s << "-D" << cfg.dim;
  if (cfg.multiscale()) {
    s << "-Dl" << cfg.local_dim << "-L" << cfg.global_layers << "x" << cfg.local_layers;
  } else {
    s << "-L" << cfg.layers;
  }
  if (cfg.kind == ArchKind::megabyte || cfg.kind == ArchKind::spacebyte_fixed) {
    s << "-P" << cfg.patch_size;
  }
  s << "-T" << cfg.context;
  return s.str();
}

std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points) {
  std::vector<ParetoPoint> sorted = points;
  std::stable_sort(sorted.begin(), sorted.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.flops_per_byte != b.flops_per_byte) {
      return a.flops_per_byte < b.flops_per_byte;
    }
    return a.bpb < b.bpb;
  });
  // Sweep by cost: a point survives only if it beats every cheaper one.
  std::vector<ParetoPoint> kept;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : sorted) {
    if (p.bpb < best) {
      kept.push_back(p);
      best = p.bpb;
    }
  }
  std::vector<ParetoPoint> hull;
  for (const auto& p : kept) {
    const double px = std::log(p.flops_per_byte);
    const double py = std::log(p.bpb);
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      if (cross(std::log(a.flops_per_byte), std::log(a.bpb), std::log(b.flops_per_byte),
                std::log(b.bpb), px, py) > 0.0) {
        break;
      }
      hull.pop_back();
    }
    hull.push_back(p);
  }
  return hull;
}

std::string pareto_svg(const std::vector<ParetoPoint>& points,
                       const std::vector<ParetoPoint>& frontier) {
  const double W = 640, H = 420, pad = 56;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& p : points) {
    x0 = std::min(x0, std::log10(p.flops_per_byte));
    x1 = std::max(x1, std::log10(p.flops_per_byte));
    y0 = std::min(y0, std::log10(p.bpb));
    y1 = std::max(y1, std::log10(p.bpb));
  }
  if (points.empty()) {
    x0 = y0 = 0.0;
    x1 = y1 = 1.0;
  }
  if (x1 - x0 < 1e-9) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-9) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto X = [&](double f) { return pad + (std::log10(f) - x0) / (x1 - x0) * (W - 2 * pad); };
  auto Y = [&](double b) { return H - pad - (std::log10(b) - y0) / (y1 - y0) * (H - 2 * pad); };

  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\""
    << H - pad << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 16
    << "\" text-anchor=\"middle\" font-size=\"13\">inference FLOPs per byte (log)</text>\n";
  s << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
    << "transform=\"rotate(-90 16 " << H / 2 << ")\">bits per byte (log)</text>\n";
  for (const auto& p : points) {
    s << "<circle cx=\"" << X(p.flops_per_byte) << "\" cy=\"" << Y(p.bpb)
      << "\" r=\"3.5\" fill=\"#4477aa\"><title>" << p.id << "</title></circle>\n";
  }
  if (!frontier.empty()) {
    s << "<polyline fill=\"none\" stroke=\"#cc3311\" stroke-width=\"2\" points=\"";
    for (const auto& p : frontier) {
      s << X(p.flops_per_byte) << "," << Y(p.bpb) << " ";
    }
    s << "\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace spacebyte
