#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <string>
#include <vector>

#include "gradcheck.h"
#include "spacebyte/architectures.h"
#include "spacebyte/ops.h"
#include "spacebyte/trainer.h"

using namespace spacebyte;
using sbtest::T64;
using sbtest::grad_check;
using sbtest::project;

namespace {

constexpr double kPrimitiveTol = 1e-5;
constexpr int kTrials = 6;

std::size_t dim(CounterRng& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.below(hi - lo + 1);
}

void expect_ok(const sbtest::GradCheckResult& r, const char* what) {
  INFO(what);
  CHECK(r.checked > 0);
  CHECK(r.max_rel < kPrimitiveTol);
}

}  // namespace

TEST_CASE("finite-difference checks for every primitive") {
  CounterRng rng(2024);
  std::size_t shapes = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::uint64_t seed = 100 + trial;
    {
      const std::size_t m = dim(rng, 1, 4), k = dim(rng, 1, 5), n = dim(rng, 1, 4);
      expect_ok(grad_check({sbtest::random_tensor<double>({m, k}, rng),
                            sbtest::random_tensor<double>({k, n}, rng)},
                           [&](const std::vector<T64>& in) { return project(matmul(in[0], in[1]), seed); }),
                "matmul");
      const std::size_t b = dim(rng, 1, 3);
      expect_ok(grad_check({sbtest::random_tensor<double>({b, m, k}, rng),
                            sbtest::random_tensor<double>({b, k, n}, rng)},
                           [&](const std::vector<T64>& in) { return project(matmul(in[0], in[1]), seed); }),
                "batched matmul");
      expect_ok(grad_check({sbtest::random_tensor<double>({m, k}, rng)},
                           [&](const std::vector<T64>& in) { return project(transpose(in[0]), seed); }),
                "transpose");
      shapes += 3;
    }
    {
      const Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
      expect_ok(grad_check({sbtest::random_tensor<double>(s, rng), sbtest::random_tensor<double>(s, rng)},
                           [&](const std::vector<T64>& in) { return project(add(in[0], in[1]), seed); }),
                "add");
      expect_ok(grad_check({sbtest::random_tensor<double>(s, rng)},
                           [&](const std::vector<T64>& in) { return project(scale(in[0], -1.75), seed); }),
                "scale");
      expect_ok(grad_check({sbtest::random_tensor<double>(s, rng)},
                           [&](const std::vector<T64>& in) { return sum(in[0]); }),
                "sum");
      expect_ok(grad_check({sbtest::random_tensor<double>(s, rng)},
                           [&](const std::vector<T64>& in) {
                             return project(reshape(in[0], {s[1], s[0]}), seed);
                           }),
                "reshape");
      expect_ok(grad_check({sbtest::random_tensor<double>(s, rng, 2.0)},
                           [&](const std::vector<T64>& in) { return project(softmax(in[0]), seed); }),
                "softmax");
      expect_ok(grad_check({sbtest::random_tensor<double>(s, rng, 2.0)},
                           [&](const std::vector<T64>& in) { return project(gelu(in[0]), seed); }),
                "gelu");
      shapes += 6;
    }
    {
      const std::size_t rows = dim(rng, 1, 4), d = dim(rng, 2, 6);
      expect_ok(grad_check({sbtest::random_tensor<double>({rows, d}, rng), sbtest::random_tensor<double>({d}, rng)},
                           [&](const std::vector<T64>& in) { return project(layer_norm(in[0], in[1]), seed); }),
                "layer_norm");
      const std::size_t period = dim(rng, 1, 3);
      expect_ok(grad_check({sbtest::random_tensor<double>({period * 2, d}, rng),
                            sbtest::random_tensor<double>({period + 1, d}, rng)},
                           [&](const std::vector<T64>& in) { return project(add_tiled(in[0], in[1], period), seed); }),
                "add_tiled");
      std::vector<std::int32_t> ids(dim(rng, 1, 6));
      for (auto& id : ids) {
        id = static_cast<std::int32_t>(rng.below(rows));
      }
      expect_ok(grad_check({sbtest::random_tensor<double>({rows, d}, rng)},
                           [&](const std::vector<T64>& in) { return project(embedding(in[0], ids), seed); }),
                "embedding");
      shapes += 3;
    }
    {
      const std::size_t rows = dim(rng, 1, 5), hd = 2 * dim(rng, 1, 4);
      std::vector<std::int32_t> pos(rows);
      for (auto& p : pos) {
        p = static_cast<std::int32_t>(rng.below(50));
      }
      expect_ok(grad_check({sbtest::random_tensor<double>({rows, hd}, rng)},
                           [&](const std::vector<T64>& in) { return project(rope_apply(in[0], pos), seed); }),
                "rope_apply");
      const std::size_t V = dim(rng, 2, 7);
      std::vector<std::int32_t> tgt(rows);
      for (auto& t : tgt) {
        t = rng.below(4) == 0 ? -1 : static_cast<std::int32_t>(rng.below(V));
      }
      expect_ok(grad_check({sbtest::random_tensor<double>({rows, V}, rng, 2.0)},
                           [&](const std::vector<T64>& in) { return cross_entropy_masked(in[0], tgt); }),
                "cross_entropy_masked");
      shapes += 2;
    }
    {
      const std::size_t B = dim(rng, 1, 2), T = dim(rng, 1, 6), H = dim(rng, 1, 2), hd = dim(rng, 1, 3);
      const AttentionSpan span{dim(rng, 1, 6), rng.below(2) ? dim(rng, 1, 3) : 0};
      expect_ok(grad_check({sbtest::random_tensor<double>({B * T, H * hd}, rng),
                            sbtest::random_tensor<double>({B * T, H * hd}, rng),
                            sbtest::random_tensor<double>({B * T, H * hd}, rng)},
                           [&](const std::vector<T64>& in) {
                             return project(banded_attention(in[0], in[1], in[2], B, T, H, span), seed);
                           }),
                "banded_attention");
      const std::size_t n = dim(rng, 2, 6), d = dim(rng, 1, 3), wide = d + dim(rng, 0, 3);
      std::vector<std::size_t> rows(dim(rng, 1, 4));
      std::vector<std::uint8_t> valid(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i] = rng.below(n);
        valid[i] = rng.below(3) != 0;
      }
      expect_ok(grad_check({sbtest::random_tensor<double>({n, d}, rng)},
                           [&](const std::vector<T64>& in) { return project(gather_rows_padded(in[0], rows, wide), seed); }),
                "gather_rows_padded");
      expect_ok(grad_check({sbtest::random_tensor<double>({n, d}, rng),
                            sbtest::random_tensor<double>({rows.size(), wide}, rng)},
                           [&](const std::vector<T64>& in) {
                             return project(scatter_add_trailing(in[0], in[1], rows, valid), seed);
                           }),
                "scatter_add_trailing");
      const std::size_t seq = dim(rng, 1, 4), shift = dim(rng, 0, 2);
      expect_ok(grad_check({sbtest::random_tensor<double>({2 * seq, d}, rng)},
                           [&](const std::vector<T64>& in) {
                             return project(shift_rows(in[0], 2, seq, shift), seed);
                           }),
                "shift_rows");
      shapes += 4;
    }
  }
  CHECK(shapes >= 100);
}

TEST_CASE("random three-op chains match finite differences") {
  CounterRng rng(77);
  using Op = std::function<T64(const T64&)>;
  const std::vector<std::pair<const char*, Op>> ops = {
      {"softmax", [](const T64& x) { return softmax(x); }},
      {"gelu", [](const T64& x) { return gelu(x); }},
      {"scale", [](const T64& x) { return scale(x, 0.5); }},
      {"self-add", [](const T64& x) { return add(x, x); }},
      {"layer_norm", [](const T64& x) { return layer_norm(x, T64::full({x.dim(-1)}, 1.3)); }},
      {"gram", [](const T64& x) { return matmul(x, transpose(x)); }},
  };
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = dim(rng, 2, 4);
    const auto& a = ops[rng.below(ops.size())];
    const auto& b = ops[rng.below(ops.size())];
    const auto& c = ops[rng.below(ops.size())];
    INFO(a.first, " -> ", b.first, " -> ", c.first);
    const auto r = grad_check({sbtest::random_tensor<double>({n, n}, rng)},
                              [&](const std::vector<T64>& in) {
                                return project(c.second(b.second(a.second(in[0]))), 5 + trial);
                              });
    CHECK(r.max_rel < kPrimitiveTol);
  }
}

namespace {

// Perturbs a strided subset of every parameter of a model in place.
double model_grad_check(const ModelConfig& cfg, const Batch& batch, std::size_t per_param) {
  ParamStore<double> params(model_param_specs(cfg));
  CounterRng init(3);
  init_params(params, init);
  params.zero_grad();
  model_forward(cfg, params, batch).loss.backward();
  double worst = 0.0;
  NoGradGuard guard;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params.tensor(i);
    const std::vector<double> g(t.grad().begin(), t.grad().end());
    auto data = t.data_mut();
    const std::size_t stride = std::max<std::size_t>(1, data.size() / per_param);
    for (std::size_t k = 0; k < data.size(); k += stride) {
      const double orig = data[k];
      const double h = 1e-5;
      data[k] = orig + h;
      const double up = model_forward(cfg, params, batch).loss.item();
      data[k] = orig - h;
      const double down = model_forward(cfg, params, batch).loss.item();
      data[k] = orig;
      const double analytic = g.empty() ? 0.0 : g[k];
      const double r = sbtest::rel_err(analytic, (up - down) / (2 * h));
      if (r > worst) {
        INFO(params.spec(i).name, "[", k, "]");
        worst = r;
      }
    }
  }
  return worst;
}

Batch text_batch(std::size_t b, std::size_t T, std::uint64_t seed) {
  CounterRng rng(seed);
  Batch out{b, T, {}, {}};
  for (std::size_t r = 0; r < b; ++r) {
    auto row = sbtest::random_text(T + 1, rng);
    row[0] = 255;
    out.tokens.insert(out.tokens.end(), row.begin(), row.end() - 1);
    out.targets.insert(out.targets.end(), row.begin() + 1, row.end());
  }
  return out;
}

}  // namespace

TEST_CASE("end-to-end gradient of a tiny model of each kind") {
  ModelConfig sb;
  sb.kind = ArchKind::spacebyte;
  sb.context = 12;
  sb.dim = 16;
  sb.local_dim = 8;
  sb.global_context = 4;
  sb.local_window = 8;
  sb.global_layers = 2;
  sb.local_layers = 2;
  sb.head_dim = 4;
  CHECK(model_grad_check(sb, text_batch(2, 12, 1), 12) < 1e-4);

  ModelConfig fixed = sb;
  fixed.kind = ArchKind::spacebyte_fixed;
  fixed.patch_size = 3;
  CHECK(model_grad_check(fixed, text_batch(1, 12, 2), 8) < 1e-4);

  ModelConfig mb;
  mb.kind = ArchKind::megabyte;
  mb.context = 12;
  mb.dim = 16;
  mb.local_dim = 8;
  mb.patch_size = 4;
  mb.global_context = 3;
  mb.global_layers = 1;
  mb.local_layers = 1;
  mb.head_dim = 4;
  CHECK(model_grad_check(mb, text_batch(2, 12, 3), 8) < 1e-4);

  ModelConfig tr;
  tr.kind = ArchKind::window_transformer;
  tr.context = 10;
  tr.dim = 8;
  tr.window = 4;
  tr.layers = 2;
  tr.head_dim = 4;
  CHECK(model_grad_check(tr, text_batch(2, 10, 4), 8) < 1e-4);
}
