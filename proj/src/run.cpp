#include "spacebyte/run.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "spacebyte/data.h"
#include "spacebyte/error.h"

#ifndef SPACEBYTE_REVISION
#define SPACEBYTE_REVISION "unknown"
#endif

namespace spacebyte {
namespace {

using nlohmann::json;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::uint32_t> token_byte_table(const BpeVocab& v) {
  std::vector<std::uint32_t> t(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    t[i] = static_cast<std::uint32_t>(v.bytes_of(static_cast<std::int32_t>(i)).size());
  }
  return t;
}

}  // namespace

const char* revision() noexcept { return SPACEBYTE_REVISION; }

PreparedData prepare_data(const std::string& path, double eval_fraction, ModelConfig& model,
                          std::optional<BpeVocab> vocab) {
  const Corpus corpus = build_corpus(load_documents(path));
  const std::size_t cut = split_point(corpus.bytes.size(), eval_fraction);
  const ByteSpan train(corpus.bytes.data(), cut);
  const ByteSpan held(corpus.bytes.data() + cut, corpus.bytes.size() - cut);

  PreparedData d;
  if (!model.is_subword()) {
    d.train = byte_tokens(train);
    d.eval = byte_tokens(held);
    return d;
  }
  if (!vocab) {
    vocab = bpe_train(train, model.vocab_size);
  }
  model.vocab_size = vocab->size();
  model.validate();
  d.train = vocab->encode(train);
  d.eval = vocab->encode(held);
  d.token_bytes = token_byte_table(*vocab);
  d.bos = BpeVocab::kBosId;
  d.bytes_per_token =
      d.train.empty() ? 1.0
                      : std::max(1.0, static_cast<double>(train.size()) /
                                          static_cast<double>(d.train.size()));
  d.vocab = std::move(vocab);
  return d;
}

TrainSummary train_loop(RunConfig cfg, const std::string& out_dir, std::ostream* log) {
  namespace fs = std::filesystem;
  if (cfg.data.path.empty()) {
    throw ConfigError("config key 'data.path' is required for training");
  }
  std::optional<BpeVocab> given;
  if (!cfg.data.vocab.empty()) {
    given = BpeVocab::load(cfg.data.vocab);
  }
  ModelConfig& mc = cfg.model;
  mc.validate();
  PreparedData data = prepare_data(cfg.data.path, cfg.data.eval_fraction, mc, given);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw DataError("cannot create output directory " + out_dir + ": " + ec.message());
  }
  if (data.vocab && cfg.data.vocab.empty()) {
    data.vocab->save((fs::path(out_dir) / "vocab.json").string());
  }

  const TrainConfig& tc = cfg.train;
  const std::size_t T = mc.context;
  const std::size_t B = tc.batch_size;
  TrainSummary sum;
  sum.model = mc;
  sum.flops = flops_per_byte(mc, data.bytes_per_token);
  const double bytes_per_sample = static_cast<double>(T) * data.bytes_per_token;
  sum.steps = tc.flop_budget > 0.0
                  ? steps_for_budget(tc.flop_budget, sum.flops.flops_per_byte, B, bytes_per_sample)
                  : tc.steps;
  if (sum.steps > 0 && data.train.size() < T) {
    throw DataError("training split has " + std::to_string(data.train.size()) +
                    " tokens, fewer than the context " + std::to_string(T));
  }
  const std::vector<Sample> windows = eval_windows(data.eval, T, data.bos, cfg.eval.windows);
  if (cfg.data.eval_fraction > 0.0 && windows.empty()) {
    throw DataError("held-out split of " + std::to_string(data.eval.size()) +
                    " tokens is too small for one evaluation window of " + std::to_string(T));
  }

  ParamStore<float> params(model_param_specs(mc));
  CounterRng init_rng(tc.seed, 0);
  init_params(params, init_rng);
  if (tc.zero_deembed) {
    zero_deembedding(params);
  }
  AdamW<float> opt(params, tc);
  CounterRng sampler(tc.seed, 1);

  std::ofstream csv(fs::path(out_dir) / "metrics.csv", std::ios::binary | std::ios::trunc);
  if (!csv) {
    throw DataError("cannot write metrics.csv in " + out_dir);
  }
  csv << "step,bytes_seen,train_flops,lr,train_loss,eval_bpb,eval_stderr\n";

  auto run_eval = [&]() -> std::optional<EvalResult> {
    if (windows.empty()) {
      return std::nullopt;
    }
    return evaluate(mc, params, windows, cfg.eval.batch_size, data.token_bytes);
  };
  auto write_row = [&](std::size_t step, double lr, std::optional<double> loss,
                       const std::optional<EvalResult>& ev) {
    const double bytes = static_cast<double>(step) * static_cast<double>(B) * bytes_per_sample;
    csv << step << ',' << fmt(bytes) << ',' << fmt(sum.flops.training_flops_per_byte * bytes)
        << ',' << fmt(lr) << ',' << (loss ? fmt(*loss) : "") << ','
        << (ev ? fmt(ev->bpb) : "") << ',' << (ev ? fmt(ev->stderr_) : "") << '\n';
  };

  json meta{{"seed", tc.seed},
            {"revision", revision()},
            {"eval_fraction", cfg.data.eval_fraction},
            {"eval_windows", cfg.eval.windows},
            {"eval_batch_size", cfg.eval.batch_size}};
  const BpeVocab* vocab_ptr = data.vocab ? &*data.vocab : nullptr;

  std::optional<EvalResult> ev = run_eval();
  write_row(0, lr_at_step(tc.lr, 0, sum.steps, tc.warmup_fraction), std::nullopt, ev);
  if (log && ev) {
    *log << "step 0 eval_bpb " << ev->bpb << " +- " << ev->stderr_ << '\n';
  }

  for (std::size_t s = 0; s < sum.steps; ++s) {
    Batch batch;
    batch.batch = B;
    batch.seq = T;
    for (std::size_t i = 0; i < B; ++i) {
      Sample smp = sample_context(data.train, T, data.bos, sampler);
      batch.tokens.insert(batch.tokens.end(), smp.tokens.begin(), smp.tokens.end());
      batch.targets.insert(batch.targets.end(), smp.targets.begin(), smp.targets.end());
    }
    const double lr = lr_at_step(tc.lr, s, sum.steps, tc.warmup_fraction);
    ForwardOutput<float> out = model_forward(mc, params, batch);
    const double loss = static_cast<double>(out.loss.item());
    try {
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at step " + std::to_string(s + 1));
      }
      out.loss.backward();
      clip_grad_norm(params, tc.clip_norm);
      opt.step(params, lr);
    } catch (const NumericError&) {
      meta["step"] = s;
      save_checkpoint((fs::path(out_dir) / "checkpoint.nonfinite.bin").string(), mc, params,
                      vocab_ptr, meta);
      throw;
    }
    params.zero_grad();

    const bool last = s + 1 == sum.steps;
    const bool do_eval = last || (tc.eval_every && (s + 1) % tc.eval_every == 0);
    ev = do_eval ? run_eval() : std::nullopt;
    write_row(s + 1, lr, loss, ev);
    if (log && (do_eval || (s + 1) % 50 == 0)) {
      *log << "step " << s + 1 << "/" << sum.steps << " loss " << loss;
      if (ev) {
        *log << " eval_bpb " << ev->bpb << " +- " << ev->stderr_;
      }
      *log << '\n';
    }
  }
  if (!ev) {
    ev = run_eval();
  }
  sum.final_eval = ev;
  sum.bytes_seen = static_cast<double>(sum.steps) * static_cast<double>(B) * bytes_per_sample;
  sum.train_flops = sum.flops.training_flops_per_byte * sum.bytes_seen;
  csv.close();

  meta["step"] = sum.steps;
  save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), mc, params, vocab_ptr, meta);

  json run = to_json(cfg);
  run["model"] = to_json(mc);
  json info{{"revision", revision()},
            {"seed", tc.seed},
            {"steps", sum.steps},
            {"flops_per_byte", sum.flops.flops_per_byte},
            {"bytes_per_token", data.bytes_per_token},
            {"train_flops", sum.train_flops},
            {"config", run}};
  if (ev) {
    info["final_eval"] = {{"bpb", ev->bpb},
                          {"stderr", ev->stderr_},
                          {"windows", ev->windows},
                          {"bytes", ev->bytes},
                          {"masked_targets", ev->masked_targets}};
  }
  std::ofstream(fs::path(out_dir) / "run.json") << info.dump(2) << '\n';
  return sum;
}

EvalResult evaluate_checkpoint(const Checkpoint& ck, const std::string& data_path,
                               std::optional<double> eval_fraction,
                               std::optional<std::size_t> windows) {
  const double frac = eval_fraction ? *eval_fraction : ck.meta.value("eval_fraction", 0.1);
  const std::size_t nwin = windows ? *windows : ck.meta.value("eval_windows", std::size_t{64});
  const std::size_t batch = ck.meta.value("eval_batch_size", std::size_t{8});
  ModelConfig mc = ck.config;
  if (mc.is_subword() && !ck.vocab) {
    throw DataError("subword checkpoint carries no tokenizer");
  }
  const std::size_t expected_vocab = mc.vocab_size;
  PreparedData data = prepare_data(data_path, frac, mc, ck.vocab);
  if (mc.vocab_size != expected_vocab) {
    throw DataError("checkpoint vocabulary does not match its model config");
  }
  const std::vector<Sample> w = eval_windows(data.eval, mc.context, data.bos, nwin);
  if (w.empty()) {
    throw DataError("held-out split is too small for one evaluation window");
  }
  return evaluate(mc, ck.params, w, batch, data.token_bytes);
}

}  // namespace spacebyte
