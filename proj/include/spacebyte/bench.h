#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "spacebyte/config_io.h"

namespace spacebyte {

struct BenchEntry {
  std::string id;
  RunConfig run;
};

struct BenchRow {
  std::string id;
  ModelConfig model;
  std::uint64_t params = 0;  // non-embedding
  double flops_per_byte = 0.0;
  std::size_t steps = 0;
  double train_flops = 0.0;
  double bpb = 0.0;
  double stderr_ = 0.0;
};

// The desk-scale lineup: SpaceByte, SpaceByte with fixed patches, window
// transformer, plain transformer, and subword transformer, all sharing one
// training recipe. subword_vocab is the BPE size of the last one.
std::vector<BenchEntry> bench_lineup(const std::string& data_path, std::uint64_t seed,
                                     std::size_t batch_size, std::size_t subword_vocab);

// Trains every entry to the same training FLOP budget under out_dir/<id>,
// then writes results.csv (model_id, flops_per_byte, bpb, stderr, steps,
// train_flops) and table.md.
std::vector<BenchRow> run_bench(std::vector<BenchEntry> entries, double flop_budget,
                                const std::string& out_dir, std::ostream* log = nullptr);

std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace spacebyte
