#include "spacebyte/bench.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spacebyte/accounting.h"
#include "spacebyte/error.h"
#include "spacebyte/run.h"

namespace spacebyte {

std::vector<BenchEntry> bench_lineup(const std::string& data_path, std::uint64_t seed,
                                     std::size_t batch_size, std::size_t subword_vocab) {
  RunConfig base;
  base.data.path = data_path;
  base.data.eval_fraction = 0.02;
  base.train.seed = seed;
  base.train.batch_size = batch_size;
  base.train.lr = 0.005 / std::sqrt(static_cast<double>(batch_size));
  base.eval.batch_size = 4;

  auto entry = [&](std::string id, ModelConfig m) {
    BenchEntry e{std::move(id), base};
    e.run.model = m;
    // Score about the same number of held-out bytes for every context size.
    e.run.eval.windows = std::max<std::size_t>(8, 98304 / m.context);
    return e;
  };

  std::vector<BenchEntry> out;
  out.push_back(entry("spacebyte", ModelConfig::make_spacebyte(128, 64, 2, 2, 6)));
  out.push_back(
      entry("spacebyte_fixed", ModelConfig::make_spacebyte_fixed(128, 64, 2, 2, 6)));
  out.push_back(entry("window_transformer", ModelConfig::make_window_transformer(128, 4, 6)));
  out.push_back(entry("transformer", ModelConfig::make_transformer(128, 4)));
  out.push_back(entry("subword", ModelConfig::make_transformer(128, 4, subword_vocab)));
  return out;
}

std::vector<BenchRow> run_bench(std::vector<BenchEntry> entries, double flop_budget,
                                const std::string& out_dir, std::ostream* log) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<BenchRow> rows;
  for (auto& e : entries) {
    e.run.train.flop_budget = flop_budget;
    e.run.train.steps = 0;
    if (log) {
      *log << "== " << e.id << " (" << config_label(e.run.model) << ")\n";
    }
    const TrainSummary s = train_loop(e.run, (fs::path(out_dir) / e.id).string(), log);
    BenchRow r;
    r.id = e.id;
    r.model = s.model;
    r.params = count_params(s.model).total();
    r.flops_per_byte = s.flops.flops_per_byte;
    r.steps = s.steps;
    r.train_flops = s.train_flops;
    if (!s.final_eval) {
      throw DataError("benchmark entry " + e.id + " produced no evaluation");
    }
    r.bpb = s.final_eval->bpb;
    r.stderr_ = s.final_eval->stderr_;
    rows.push_back(r);
  }
  std::ofstream csv(fs::path(out_dir) / "results.csv");
  csv << "model_id,flops_per_byte,bpb,stderr,steps,train_flops\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.6g,%.6f,%.6f,%zu,%.6g\n", r.id.c_str(),
                  r.flops_per_byte, r.bpb, r.stderr_, r.steps, r.train_flops);
    csv << buf;
  }
  std::ofstream(fs::path(out_dir) / "table.md") << bench_table(rows);
  return rows;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream s;
  s << "| model | config | non-emb params | FLOPs/byte | steps | train FLOPs | BPB |\n";
  s << "|---|---|---:|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    char buf[320];
    std::snprintf(buf, sizeof buf, "| %s | %s | %llu | %.3g | %zu | %.3g | %.3f ± %.3f |\n",
                  r.id.c_str(), config_label(r.model).c_str(),
                  static_cast<unsigned long long>(r.params), r.flops_per_byte, r.steps,
                  r.train_flops, r.bpb, r.stderr_);
    s << buf;
  }
  return s.str();
}

}  // namespace spacebyte
