// Acceptance checks. With no arguments every criterion runs; otherwise only
// the listed numbers. One PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "gradcheck.h"
#include "pareto_oracle.h"
#include "spacebyte/accounting.h"
#include "spacebyte/bench.h"
#include "spacebyte/run.h"
#include "spacebyte/segmenter.h"
#include "tiny_models.h"

using namespace spacebyte;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> csv_last_row(const std::string& csv) {
  std::string text = csv;
  while (!text.empty() && text.back() == '\n') text.pop_back();
  std::stringstream ls(text.substr(text.rfind('\n') + 1));
  std::vector<std::string> cells;
  std::string c;
  while (std::getline(ls, c, ',')) cells.push_back(c);
  while (cells.size() < 7) cells.emplace_back();
  return cells;
}

// ---------------------------------------------------------------------------

Outcome c1_params() {
  ModelConfig sb = ModelConfig::make_spacebyte(1536, 768, 28, 26, 6);
  const auto p = count_params(sb);
  const auto sw = count_params(ModelConfig::make_transformer(1024, 16, 50257)).total();
  const bool ok = p.m_global() == 792723456ull && p.m_local() == 184221696ull && sw == 252789760ull;
  return {ok, "m_global=" + std::to_string(p.m_global()) + " m_local=" + std::to_string(p.m_local()) +
                  " subword=" + std::to_string(sw)};
}

Outcome c2_flops() {
  ModelConfig sb = ModelConfig::make_spacebyte(1536, 768, 28, 26, 6);
  sb.context = 8192;
  sb.global_context = 1344;
  sb.local_window = 768;
  const double f = flops_per_byte(sb).flops_per_byte;
  const double s = flops_per_byte(ModelConfig::make_transformer(1024, 32, 50257), 4.05).flops_per_byte;
  const double e1 = std::abs(f / 728e6 - 1), e2 = std::abs(s / 260e6 - 1);
  return {e1 < 0.01 && e2 < 0.02, "spacebyte " + fmt("%.6g", f) + " (" + fmt("%.3f", 100 * e1) +
                                      "% off 728M), subword " + fmt("%.6g", s) + " (" +
                                      fmt("%.3f", 100 * e2) + "% off 260M)"};
}

Outcome c3_segmentation() {
  const std::string frag = "where $q_1=q_2=";
  const auto pb = split_patches(as_bytes(frag));
  std::vector<std::size_t> lens;
  for (std::size_t k = 0; k < pb.size(); ++k) lens.push_back(pb.patch_end(k) - pb.patch_begin(k));
  std::string marked;
  for (std::size_t i : marked_positions(as_bytes(frag))) marked += frag[i];
  const std::string quote = "said \xE2\x80\x9Chi";
  const auto m = insertion_mask(as_bytes(quote));
  std::size_t quote_marks = 0;
  for (std::size_t i = 5; i < 8; ++i) quote_marks += m[i];
  const bool ok = lens == std::vector<std::size_t>{6, 3, 2, 2, 2} && marked == " _=_=" &&
                  !pb.has_partial_tail && m[4] && quote_marks == 0;
  const std::string quote2 = "x\xE2\x80\x9Cy";
  const auto m2 = insertion_mask(as_bytes(quote2));
  const bool ok2 = m2[1] && !m2[2] && !m2[3];
  std::string ls;
  for (auto l : lens) ls += std::to_string(l) + " ";
  return {ok && ok2, "patches [ " + ls + "] marks \"" + marked + "\", curly quote leading byte only"};
}

Outcome c4_causality() {
  int bad = 0;
  std::string what;
  for (const auto& cfg : sbtest::tiny_configs()) {
    if (cfg.kind == ArchKind::transformer) continue;
    const int v = sbtest::causality_violations(cfg, 100, 31);
    bad += v;
    what += std::string(kind_name(cfg.kind)) + "=" + std::to_string(v) + " ";
  }
  return {bad == 0, "violations over 100 trials: " + what};
}

Outcome c5_gradients() {
  using sbtest::T64;
  CounterRng rng(55);
  double worst = 0;
  std::string worst_name;
  std::size_t cases = 0;
  auto run = [&](const char* name, std::vector<T64> in, std::function<T64(const std::vector<T64>&)> f) {
    const auto r = sbtest::grad_check(std::move(in), f);
    ++cases;
    if (r.max_rel > worst) worst = r.max_rel, worst_name = name;
  };
  auto rt = [&](Shape s, double scale = 1.0) { return sbtest::random_tensor<double>(std::move(s), rng, scale); };
  auto P = [](const T64& y) { return sbtest::project(y, 3); };
  for (int t = 0; t < 3; ++t) {
    const std::size_t m = 2 + t, k = 3, n = 4 - t, d = 2 * (t + 1);
    run("matmul", {rt({m, k}), rt({k, n})}, [&](auto& x) { return P(matmul(x[0], x[1])); });
    run("batched matmul", {rt({2, m, k}), rt({2, k, n})}, [&](auto& x) { return P(matmul(x[0], x[1])); });
    run("transpose", {rt({m, k})}, [&](auto& x) { return P(transpose(x[0])); });
    run("add", {rt({m, n}), rt({m, n})}, [&](auto& x) { return P(add(x[0], x[1])); });
    run("scale", {rt({m, n})}, [&](auto& x) { return P(scale(x[0], 0.37)); });
    run("sum", {rt({m, n})}, [&](auto& x) { return sum(x[0]); });
    run("reshape", {rt({m, n})}, [&](auto& x) { return P(reshape(x[0], {n, m})); });
    run("softmax", {rt({m, n}, 2)}, [&](auto& x) { return P(softmax(x[0])); });
    run("gelu", {rt({m, n}, 2)}, [&](auto& x) { return P(gelu(x[0])); });
    run("layer_norm", {rt({m, d + 1}), rt({d + 1})}, [&](auto& x) { return P(layer_norm(x[0], x[1])); });
    run("add_tiled", {rt({3 * m, n}), rt({m, n})}, [&](auto& x) { return P(add_tiled(x[0], x[1], m)); });
    const std::vector<std::int32_t> ids{0, 2, 1, 2};
    run("embedding", {rt({3, d})}, [&](auto& x) { return P(embedding(x[0], ids)); });
    const std::vector<std::int32_t> pos{0, 5, 17};
    run("rope_apply", {rt({3, d})}, [&](auto& x) { return P(rope_apply(x[0], pos)); });
    const std::vector<std::int32_t> tg{1, -1, 0, 3};
    run("cross_entropy_masked", {rt({4, 5}, 2)}, [&](auto& x) { return cross_entropy_masked(x[0], tg); });
    const std::size_t T = 5;
    run("banded_attention", {rt({2 * T, d}), rt({2 * T, d}), rt({2 * T, d})}, [&](auto& x) {
      return P(banded_attention(x[0], x[1], x[2], 2, T, 2 - t % 2, AttentionSpan{2 + t, t == 2 ? 3u : 0u}));
    });
    const std::vector<std::size_t> rows{3, 0, 3};
    const std::vector<std::uint8_t> valid{1, 1, 0};
    run("gather_rows_padded", {rt({4, d})}, [&](auto& x) { return P(gather_rows_padded(x[0], rows, d + 2)); });
    run("scatter_add_trailing", {rt({4, d}), rt({3, d + 2})},
        [&](auto& x) { return P(scatter_add_trailing(x[0], x[1], rows, valid)); });
    run("shift_rows", {rt({2 * m, d})}, [&](auto& x) { return P(shift_rows(x[0], 2, m, 1)); });
  }
  const double prim = worst;
  const std::string prim_name = worst_name;

  // Full tiny SpaceByte forward + loss, every parameter coordinate.
  ModelConfig cfg;
  cfg.kind = ArchKind::spacebyte;
  cfg.context = 12;
  cfg.dim = 16;
  cfg.local_dim = 8;
  cfg.global_context = 4;
  cfg.local_window = 8;
  cfg.global_layers = 2;
  cfg.local_layers = 2;
  cfg.head_dim = 4;
  auto params = sbtest::init_model<double>(cfg, 9);
  const Batch batch = sbtest::text_batch(2, 12, 10);
  std::vector<T64> leaves;
  for (std::size_t i = 0; i < params.size(); ++i) leaves.push_back(params.tensor(i));
  const auto r = sbtest::grad_check(leaves, [&](const std::vector<T64>&) {
    return model_forward(cfg, params, batch).loss;
  }, 1e-5);
  return {prim < 1e-5 && r.max_rel < 1e-4,
          std::to_string(cases) + " primitive cases, max rel " + fmt("%.2e", prim) + " (" + prim_name +
              "); end-to-end " + fmt("%.2e", r.max_rel) + " over " + std::to_string(r.checked) + " coords"};
}

Outcome c6_uniform() {
  CounterRng rng(66);
  std::vector<std::uint8_t> bytes;
  for (int i = 0; i < 4000; ++i) bytes.push_back(static_cast<std::uint8_t>(i % 7 == 0 ? ' ' : 'a' + rng.below(26)));
  const auto ids = byte_tokens(bytes);
  double worst = 0;
  for (const auto& cfg : sbtest::tiny_configs()) {
    auto p = sbtest::init_model<float>(cfg, 67);
    zero_deembedding(p);
    const auto r = evaluate(cfg, p, eval_windows(ids, cfg.context, 255, 16), 4);
    worst = std::max(worst, std::abs(r.bpb - 8.0));
  }
  return {worst <= 1e-3, "max |BPB - 8| over 5 kinds = " + fmt("%.3g", worst)};
}

std::filesystem::path repeated_corpus(const std::filesystem::path& dir) {
  const std::string line =
      "The quick brown fox jumps over the lazy dog. A stitch in time saves nine; all that glitters "
      "is not gold. ";
  std::string text;
  while (text.size() < 4096) text += line;
  text.resize(4096);
  std::ofstream(dir / "doc.txt") << text;
  return dir;
}

Outcome c7_overfit() {
  const auto dir = sbtest::temp_dir("accept_overfit");
  RunConfig rc;
  rc.model = ModelConfig::make_spacebyte(128, 64, 4, 4, 6);
  rc.model.context = 384;
  rc.model.global_context = 64;
  rc.train.batch_size = 8;
  rc.train.lr = 0.00177;
  rc.train.steps = 500;
  rc.train.seed = 0;
  rc.data.path = repeated_corpus(dir).string();
  rc.data.eval_fraction = 0.0;
  train_loop(rc, (dir / "run").string());
  std::istringstream csv(slurp(dir / "run" / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  std::vector<double> losses;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (cells.size() > 4 && !cells[4].empty() && cells[0] != "0") losses.push_back(std::stod(cells[4]));
  }
  if (losses.size() != 500) return {false, "expected 500 loss rows, got " + std::to_string(losses.size())};
  double tail = 0;
  for (std::size_t i = losses.size() - 10; i < losses.size(); ++i) tail += losses[i];
  const double bpb = tail / 10 / std::numbers::ln2;
  return {bpb < 0.5, "training BPB over the last 10 steps " + fmt("%.4f", bpb) + " (final step " +
                         fmt("%.4f", losses.back() / std::numbers::ln2) + ")"};
}

Outcome c8_overflow() {
  auto cfg = sbtest::tiny_configs()[0];
  cfg.context = 40;
  cfg.global_context = 5;
  const auto params = sbtest::init_model<float>(cfg, 88);
  CounterRng rng(89);
  int bad = 0, cases = 0;
  for (std::size_t k = 1; k <= 6; ++k) {
    for (int trial = 0; trial < 5; ++trial) {
      // Exactly T_global + k marks: BOS, then words separated by one space.
      std::vector<std::int32_t> tokens{255};
      std::vector<std::size_t> marks{0};
      while (marks.size() < cfg.global_context + k) {
        const std::size_t len = 1 + rng.below(3);
        for (std::size_t i = 0; i < len; ++i) tokens.push_back('a' + static_cast<int>(rng.below(26)));
        marks.push_back(tokens.size());
        tokens.push_back(' ');
      }
      while (tokens.size() < cfg.context) tokens.push_back('z');
      if (tokens.size() > cfg.context) continue;
      Batch b{1, cfg.context, tokens, {}};
      for (std::size_t i = 0; i < cfg.context; ++i) b.targets.push_back(i + 1 < cfg.context ? tokens[i + 1] : 'z');
      std::vector<std::int32_t> want = b.targets;
      for (std::size_t i = marks[cfg.global_context]; i < cfg.context; ++i) want[i] = -1;
      const auto out = model_forward(cfg, params, b);
      ++cases;
      bad += out.effective_targets != want || out.stats.patches_overflowed != k;
    }
  }
  return {bad == 0 && cases > 20, std::to_string(cases) + " constructed inputs, " + std::to_string(bad) + " mismatches"};
}

Outcome c9_grid() {
  std::vector<std::size_t> got;
  for (std::size_t D : {384, 512, 768, 1024}) got.push_back(depth_for_dim(D));
  bool ok = got == std::vector<std::size_t>{16, 24, 32, 32};
  // and the emitted transformer grid uses exactly {L_D/2, L_D}
  for (auto tier : {BudgetTier::small, BudgetTier::large}) {
    for (const auto& c : grid_configs(ArchKind::transformer, tier)) {
      const std::size_t LD = depth_for_dim(c.dim);
      ok &= c.layers == LD || c.layers == LD / 2;
    }
  }
  return {ok, "L_D = " + std::to_string(got[0]) + "/" + std::to_string(got[1]) + "/" +
                  std::to_string(got[2]) + "/" + std::to_string(got[3])};
}

Outcome c10_pareto() {
  CounterRng rng(1010);
  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ParetoPoint> pts(1 + rng.below(100));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pts[i] = {std::exp(rng.uniform() * 12), 0.3 + 3 * rng.uniform(), std::to_string(i)};
      if (i > 0 && rng.below(10) == 0) pts[i].bpb = pts[rng.below(i)].bpb;
      if (i > 0 && rng.below(10) == 0) pts[i].flops_per_byte = pts[rng.below(i)].flops_per_byte;
    }
    const auto got = pareto_frontier(pts);
    const auto want = sbtest::brute_force_frontier(pts);
    bool same = got.size() == want.size();
    for (std::size_t k = 0; same && k < got.size(); ++k) same = got[k].id == pts[want[k]].id;
    bad += !same;
  }
  return {bad == 0, "1000 random sets, " + std::to_string(bad) + " disagreements"};
}

Outcome c11_schedule() {
  const double g = 0.000625;
  const std::size_t S = 20000;
  const double end0 = lr_at_step(g, 0, S), end1 = lr_at_step(g, S, S);
  const double warm = lr_at_step(g, S / 100, S);
  const double werr = std::abs(warm - g * std::cos(0.005 * std::numbers::pi));

  ParamStore<double> p({{"a", {4}, ParamRole::embedding, 0}, {"b", {4}, ParamRole::linear, 1024}});
  TrainConfig tc;
  tc.weight_decay = 0;
  AdamW<double> opt(p, tc);
  CounterRng rng(11);
  double ratio_err = 0;
  for (int s = 0; s < 10; ++s) {
    const double before_a = p.tensor(0).at(0), before_b = p.tensor(1).at(0);
    for (std::size_t i = 0; i < 2; ++i)
      for (auto& x : p.tensor(i).grad_mut()) x = rng.normal();
    for (std::size_t j = 0; j < 4; ++j) p.tensor(1).grad_mut()[j] = p.tensor(0).grad()[j];
    opt.step(p, lr_at_step(g, s + 1, 10));
    const double ra = p.tensor(0).at(0) - before_a, rb = p.tensor(1).at(0) - before_b;
    ratio_err = std::max(ratio_err, std::abs(ra / rb - 32.0));
  }
  const bool ok = end0 == 0 && std::abs(end1) < 1e-15 * g && werr < 1e-9 && ratio_err < 1e-9;
  return {ok, "lr(0)=" + fmt("%g", end0) + " lr(S)=" + fmt("%.1e", end1) + " |lr(0.01S) - g cos(0.005pi)|=" +
                  fmt("%.1e", werr) + ", step ratio 32 +- " + fmt("%.1e", ratio_err)};
}

int run_exe(const std::string& args) {
  const std::string cmd = std::string(SPACEBYTE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Outcome c12_reproducibility() {
  const auto dir = sbtest::temp_dir("accept_repro");
  {
    std::ofstream c(dir / "c.txt");
    CounterRng rng(12);
    const char* words[] = {"alpha", "beta", "gamma", "delta", "river", "stone", "light", "the", "of", "and"};
    for (int i = 0; i < 3000; ++i) c << words[rng.below(10)] << (rng.below(9) ? " " : ". ");
  }
  RunConfig rc;
  rc.model = sbtest::tiny_configs()[0];
  rc.train.batch_size = 4;
  rc.train.steps = 40;
  rc.train.eval_every = 20;
  rc.train.lr = 0.003;
  rc.data.path = (dir / "c.txt").string();
  rc.data.eval_fraction = 0.1;
  rc.eval.windows = 16;
  std::ofstream(dir / "run.json") << to_json(rc).dump(2);
  const std::string base = "train --config " + (dir / "run.json").string() + " --seed 1234 --out ";
  const int ca = run_exe(base + (dir / "a").string());
  const int cb = run_exe(base + (dir / "b").string());
  const std::string ma = slurp(dir / "a" / "metrics.csv"), mb = slurp(dir / "b" / "metrics.csv");
  const bool identical = ca == 0 && cb == 0 && !ma.empty() && ma == mb;

  const auto ck = load_checkpoint((dir / "a" / "checkpoint.bin").string());
  const auto e = evaluate_checkpoint(ck, rc.data.path);
  const std::string logged = csv_last_row(ma)[5];
  const std::string again = fmt("%.17g", e.bpb);
  return {identical && logged == again,
          std::string(identical ? "metrics byte-identical" : "metrics differ") + "; logged eval " + logged +
              ", reloaded " + again};
}

Outcome c13_bench() {
  const auto dir = sbtest::temp_dir("accept_bench");
  {
    std::ofstream c(dir / "corpus.txt");
    CounterRng rng(13);
    const char* words[] = {"thou", "art", "more", "lovely", "and", "temperate", "rough", "winds", "do",
                           "shake", "the", "darling", "buds", "of", "may", "summer", "lease", "hath"};
    while (c.tellp() < 200000) c << words[rng.below(18)] << (rng.below(11) ? " " : ",\n");
  }
  auto lineup = bench_lineup((dir / "corpus.txt").string(), 0, 4, 512);
  for (auto& e : lineup) e.run.eval.windows = 8;
  const auto rows = run_bench(std::move(lineup), 3e10, (dir / "out").string());
  bool ok = rows.size() == 5 && std::filesystem::exists(dir / "out" / "table.md") &&
            std::filesystem::exists(dir / "out" / "results.csv");
  std::string order;
  auto sorted = rows;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.bpb < b.bpb; });
  for (const auto& r : sorted) {
    ok &= std::isfinite(r.bpb) && r.bpb > 0 && std::isfinite(r.stderr_);
    order += r.id + " " + fmt("%.3f", r.bpb) + "; ";
  }
  return {ok, "reported, not asserted (smoke run): " + order + "desk-scale results in README"};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*fn)();
};

const Criterion kCriteria[] = {
    {1, "parameter oracle", c1_params},
    {2, "FLOPs oracle", c2_flops},
    {3, "segmentation golden", c3_segmentation},
    {4, "causality suite", c4_causality},
    {5, "gradient checks", c5_gradients},
    {6, "uniform-logit calibration", c6_uniform},
    {7, "overfit sanity", c7_overfit},
    {8, "overflow masking", c8_overflow},
    {9, "grid oracle", c9_grid},
    {10, "pareto oracle", c10_pareto},
    {11, "schedule/optimizer", c11_schedule},
    {12, "reproducibility", c12_reproducibility},
    {13, "desk-scale benchmark", c13_bench},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  criterion %2d  %-26s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
