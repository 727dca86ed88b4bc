#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "spacebyte/accounting.h"
#include "spacebyte/checkpoint.h"
#include "spacebyte/config_io.h"
#include "spacebyte/tokenizer.h"
#include "spacebyte/trainer.h"

namespace spacebyte {

// Build revision baked in at configure time.
const char* revision() noexcept;

// Token streams for the training split and the held-out tail.
struct PreparedData {
  std::vector<std::int32_t> train;
  std::vector<std::int32_t> eval;
  std::optional<BpeVocab> vocab;
  std::vector<std::uint32_t> token_bytes;  // empty for byte models
  std::int32_t bos = 255;
  double bytes_per_token = 1.0;  // over the training split
};

// Loads documents, splits the BOS-joined corpus at split_point, and for
// subword models encodes both parts. A subword model without a vocabulary
// gets one trained on the training split; model.vocab_size is set to the
// vocabulary's size.
PreparedData prepare_data(const std::string& path, double eval_fraction, ModelConfig& model,
                          std::optional<BpeVocab> vocab);

struct TrainSummary {
  ModelConfig model;
  std::size_t steps = 0;
  FlopsReport flops;
  double train_flops = 0.0;
  double bytes_seen = 0.0;
  std::optional<EvalResult> final_eval;
};

// Writes metrics.csv (step, bytes_seen, train_flops, lr, train_loss,
// eval_bpb, eval_stderr), checkpoint.bin and run.json into out_dir. On a
// non-finite loss, checkpoint.nonfinite.bin is written and NumericError
// raised. Progress lines go to log when given.
TrainSummary train_loop(RunConfig cfg, const std::string& out_dir, std::ostream* log = nullptr);

// Evaluates a loaded checkpoint on the held-out tail of a data path. With
// no overrides the split fraction, window count, and batch size recorded at
// training time are used.
EvalResult evaluate_checkpoint(const Checkpoint& ck, const std::string& data_path,
                               std::optional<double> eval_fraction = std::nullopt,
                               std::optional<std::size_t> windows = std::nullopt);

}  // namespace spacebyte
