#include "spacebyte/cli.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spacebyte/accounting.h"
#include "spacebyte/architectures.h"
#include "spacebyte/bench.h"
#include "spacebyte/checkpoint.h"
#include "spacebyte/config_io.h"
#include "spacebyte/data.h"
#include "spacebyte/error.h"
#include "spacebyte/kernels.h"
#include "spacebyte/run.h"
#include "spacebyte/segmenter.h"
#include "spacebyte/tokenizer.h"

namespace spacebyte {
namespace {

namespace fs = std::filesystem;

std::string num(double x, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void stats_csv_row(std::ostream& out, const std::string& name, const PatchStats& s) {
  out << name << ',' << s.count << ',' << num(s.mean_len, "%.4f") << ',' << s.percentile(50)
      << ',' << s.percentile(90) << '\n';
}

int cmd_segment(const std::string& in, bool stats, const std::string& marker,
                std::ostream& out) {
  const bool raw_file = fs::is_regular_file(in) && fs::path(in).extension() != ".jsonl";
  if (raw_file && !stats) {
    const std::string text = read_all(in);
    const ByteSpan bytes = as_bytes(text);
    const std::vector<bool> mask = insertion_mask(bytes);
    std::string marked;
    for (std::size_t i = 0; i < text.size(); ++i) {
      marked += text[i];
      if (mask[i]) {
        marked += marker;
      }
    }
    out << marked << '\n';
    return kExitOk;
  }
  PatchStats s;
  if (raw_file) {
    s = patch_stats(as_bytes(read_all(in)));
  } else {
    const Corpus c = build_corpus(load_documents(in));
    s = patch_stats(ByteSpan(c.bytes.data(), c.bytes.size()));
  }
  out << "corpus,patch_count,mean_len,p50,p90\n";
  stats_csv_row(out, fs::path(in).filename().string(), s);
  return kExitOk;
}

int cmd_bpe_train(const std::string& data, std::size_t vocab_size, const std::string& path,
                  std::ostream& out) {
  const Corpus c = build_corpus(load_documents(data));
  const ByteSpan bytes(c.bytes.data(), c.bytes.size());
  const BpeVocab v = bpe_train(bytes, vocab_size);
  v.save(path);
  const std::size_t tokens = v.encode(bytes).size();
  out << "vocab_size " << v.size() << "\nmerges " << v.merges().size() << "\nbytes "
      << bytes.size() << "\ntokens " << tokens << "\nbytes_per_token "
      << num(static_cast<double>(bytes.size()) / static_cast<double>(tokens), "%.4f") << '\n';
  return kExitOk;
}

void print_flops(const ModelConfig& cfg, double bpt, std::ostream& out) {
  const ParamBreakdown p = count_params(cfg);
  const FlopsReport f = flops_per_byte(cfg, bpt);
  out << "model " << config_label(cfg) << '\n';
  auto row = [&](const char* name, std::uint64_t v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  %-28s %16llu\n", name, static_cast<unsigned long long>(v));
    out << buf;
  };
  row(p.multiscale ? "global attention" : "attention", p.global_attention);
  row(p.multiscale ? "global feed-forward" : "feed-forward", p.global_feed_forward);
  if (cfg.kind == ArchKind::megabyte) {
    row("global-to-local projection", p.global_to_local);
  }
  if (p.multiscale) {
    row("local attention", p.local_attention);
    row("local feed-forward", p.local_feed_forward);
  }
  row("de-embedding", p.deembedding);
  if (p.multiscale) {
    row("m_global", p.m_global());
    row("m_local", p.m_local());
  }
  row("m (total)", p.total());
  out << "  flops_per_token              " << num(f.flops_per_token, "%16.6g") << '\n'
      << "  bytes_per_token              " << num(f.bytes_per_token, "%16.4g") << '\n'
      << "  flops_per_byte               " << num(f.flops_per_byte, "%16.6g") << '\n'
      << "  training_flops_per_byte      " << num(f.training_flops_per_byte, "%16.6g") << "\n\n";
  out << "model,m_global,m_local,m_total,flops_per_token,bytes_per_token,flops_per_byte,"
         "training_flops_per_byte\n";
  out << config_label(cfg) << ',' << p.m_global() << ',' << p.m_local() << ',' << p.total() << ','
      << num(f.flops_per_token, "%.10g") << ',' << num(f.bytes_per_token, "%.10g") << ','
      << num(f.flops_per_byte, "%.10g") << ',' << num(f.training_flops_per_byte, "%.10g")
      << '\n';
}

int cmd_grid(const std::string& arch, const std::string& tier, std::size_t vocab,
             std::size_t avg_patch, const std::string& out_dir, std::ostream& out) {
  ArchKind kind;
  if (arch == "subword") {
    kind = ArchKind::transformer;
    if (vocab == kByteVocab) {
      vocab = 50257;
    }
  } else {
    kind = parse_kind(arch);
  }
  const auto configs = grid_configs(kind, parse_tier(tier), vocab, avg_patch);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
  }
  out << "id,kind,context,dim,local_dim,global_context,patch_size,window,layers,global_layers,"
         "local_layers,m_total,flops_per_token\n";
  for (const auto& c : configs) {
    const std::string id = config_label(c);
    out << id << ',' << kind_name(c.kind) << ',' << c.context << ',' << c.dim << ','
        << c.local_dim << ',' << c.global_context << ',' << c.patch_size << ','
        << (c.multiscale() ? c.effective_local_window() : c.attention_window()) << ',' << c.layers << ',' << c.global_layers << ','
        << c.local_layers << ',' << count_params(c).total() << ','
        << num(flops_per_byte(c).flops_per_token, "%.10g") << '\n';
    if (!out_dir.empty()) {
      std::ofstream(fs::path(out_dir) / (id + ".json")) << to_json(c).dump(2) << '\n';
    }
  }
  return kExitOk;
}

std::vector<ParetoPoint> read_results(const std::string& path) {
  std::istringstream in(read_all(path));
  std::string line;
  std::vector<ParetoPoint> pts;
  std::size_t lineno = 0;
  std::size_t col_id = 0, col_f = 1, col_b = 2;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      cells.push_back(cell);
    }
    if (header) {
      header = false;
      bool named = false;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "model_id") col_id = i, named = true;
        if (cells[i] == "flops_per_byte") col_f = i, named = true;
        if (cells[i] == "bpb") col_b = i, named = true;
      }
      if (named) {
        continue;
      }
    }
    const std::size_t need = std::max({col_id, col_f, col_b});
    if (cells.size() <= need) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected model_id, "
                      "flops_per_byte, bpb");
    }
    ParetoPoint p;
    p.id = cells[col_id];
    try {
      p.flops_per_byte = std::stod(cells[col_f]);
      p.bpb = std::stod(cells[col_b]);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": non-numeric value");
    }
    if (!(p.flops_per_byte > 0.0) || !(p.bpb > 0.0) || !std::isfinite(p.flops_per_byte) ||
        !std::isfinite(p.bpb)) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": flops_per_byte and bpb must be finite and positive");
    }
    pts.push_back(p);
  }
  return pts;
}

int cmd_pareto(const std::string& results, const std::string& out_path, const std::string& svg,
               std::ostream& out) {
  const auto pts = read_results(results);
  const auto front = pareto_frontier(pts);
  std::ostringstream csv;
  csv << "model_id,flops_per_byte,bpb\n";
  for (const auto& p : front) {
    csv << p.id << ',' << num(p.flops_per_byte, "%.10g") << ',' << num(p.bpb, "%.10g") << '\n';
  }
  std::ofstream f(out_path);
  if (!f) {
    throw DataError("cannot write " + out_path);
  }
  f << csv.str();
  if (!svg.empty()) {
    std::ofstream(svg) << pareto_svg(pts, front);
  }
  out << csv.str();
  return kExitOk;
}

int cmd_sample(const std::string& ckpt, const std::string& prompt, std::size_t max_new,
               double temperature, std::uint64_t seed, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(ckpt);
  std::vector<std::int32_t> ids{ck.config.bos_token()};
  if (ck.config.is_subword()) {
    if (!ck.vocab) {
      throw DataError("subword checkpoint carries no tokenizer");
    }
    const auto body = ck.vocab->encode(as_bytes(prompt));
    ids.insert(ids.end(), body.begin(), body.end());
  } else {
    for (const unsigned char c : prompt) {
      if (c == kBos || c == kReservedByte) {
        throw InputError("prompt contains reserved byte " + std::to_string(c));
      }
      ids.push_back(c);
    }
  }
  CounterRng rng(seed, 2);
  const auto gen = generate(ck.config, ck.params, ids, max_new, temperature, rng);
  std::string text;
  if (ck.config.is_subword()) {
    text = ck.vocab->decode(gen);
  } else {
    for (const std::int32_t t : gen) {
      text += static_cast<char>(t);
    }
  }
  out << prompt << text << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Byte-level language models with word-boundary patching"};
  app.require_subcommand(1);
  std::string backend = "auto";
  app.add_option("--kernels", backend, "Kernel backend: auto, scalar, avx2");

  auto* seg = app.add_subcommand("segment", "Mark patch boundaries or report patch statistics");
  std::string seg_in, marker = "|";
  bool seg_stats = false;
  seg->add_option("--in", seg_in, "Text file, directory, or .jsonl")->required();
  seg->add_flag("--stats", seg_stats, "Print patch statistics as CSV");
  seg->add_option("--marker", marker, "Boundary marker");

  auto* bpe = app.add_subcommand("bpe-train", "Train a byte-level BPE vocabulary");
  std::string bpe_data, bpe_out;
  std::size_t bpe_vocab = 0;
  bpe->add_option("--data", bpe_data, "Directory or .jsonl")->required();
  bpe->add_option("--vocab", bpe_vocab, "Vocabulary size (>= 257)")->required();
  bpe->add_option("--out", bpe_out, "Output vocab.json")->required();

  auto* train = app.add_subcommand("train", "Train a model from a run config");
  std::string train_cfg, train_out;
  bool print_config = false;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> train_steps;
  std::optional<std::string> train_data;
  train->add_option("--config", train_cfg, "Run config JSON");
  train->add_option("--out", train_out, "Run directory");
  train->add_option("--seed", train_seed, "Override train.seed");
  train->add_option("--steps", train_steps, "Override train.steps");
  train->add_option("--data", train_data, "Override data.path");
  train->add_flag("--print-config", print_config, "Print the effective config and exit");

  auto* ev = app.add_subcommand("eval", "Held-out bits per byte of a checkpoint");
  std::string ev_ckpt, ev_data;
  std::optional<double> ev_frac;
  std::optional<std::size_t> ev_windows;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint.bin")->required();
  ev->add_option("--data", ev_data, "Directory or .jsonl")->required();
  ev->add_option("--eval-fraction", ev_frac, "Held-out tail fraction");
  ev->add_option("--windows", ev_windows, "Maximum windows (0 = all)");

  auto* smp = app.add_subcommand("sample", "Generate a continuation");
  std::string smp_ckpt, smp_prompt;
  std::size_t smp_max = 64;
  double smp_temp = 1.0;
  std::uint64_t smp_seed = 0;
  smp->add_option("--checkpoint", smp_ckpt, "checkpoint.bin")->required();
  smp->add_option("--prompt", smp_prompt, "Prompt text (BOS is prepended)");
  smp->add_option("--max-new", smp_max, "Maximum new tokens");
  smp->add_option("--temperature", smp_temp, "Sampling temperature (<= 0: greedy)");
  smp->add_option("--seed", smp_seed, "Sampling seed");

  auto* fl = app.add_subcommand("flops", "Parameter and FLOPs breakdown of a model config");
  std::string fl_cfg;
  double fl_bpt = 1.0;
  fl->add_option("--config", fl_cfg, "Model or run config JSON")->required();
  fl->add_option("--bytes-per-token", fl_bpt, "Average bytes per token (subword)");

  auto* gr = app.add_subcommand("grid", "Emit the hyperparameter grid");
  std::string gr_arch, gr_tier, gr_out;
  std::size_t gr_vocab = kByteVocab, gr_patch = 6;
  gr->add_option("--arch", gr_arch,
                 "transformer, window_transformer, megabyte, spacebyte, spacebyte_fixed, "
                 "subword")
      ->required();
  gr->add_option("--tier", gr_tier, "small or large")->required();
  gr->add_option("--vocab", gr_vocab, "Vocabulary size for subword");
  gr->add_option("--avg-patch", gr_patch, "Context per global slot (6, or 8 for code)");
  gr->add_option("--out-dir", gr_out, "Also write one config JSON per grid point");

  auto* pa = app.add_subcommand("pareto", "Extract the Pareto frontier from results");
  std::string pa_in, pa_out, pa_svg;
  pa->add_option("--results", pa_in, "CSV with model_id, flops_per_byte, bpb")->required();
  pa->add_option("--out", pa_out, "Frontier CSV")->required();
  pa->add_option("--svg", pa_svg, "Scatter plot with frontier");

  auto* be = app.add_subcommand("bench", "Matched-FLOPs comparison of the model lineup");
  std::string be_data, be_out;
  double be_budget = 1e13;
  std::uint64_t be_seed = 0;
  std::size_t be_batch = 8, be_vocab = 2048;
  std::vector<std::string> be_only;
  be->add_option("--data", be_data, "Directory or .jsonl")->required();
  be->add_option("--out", be_out, "Output directory")->required();
  be->add_option("--budget", be_budget, "Training FLOPs per model");
  be->add_option("--seed", be_seed, "Seed shared by all runs");
  be->add_option("--batch", be_batch, "Batch size");
  be->add_option("--subword-vocab", be_vocab, "BPE vocabulary size for the subword model");
  be->add_option("--only", be_only, "Restrict to these model ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    kernels::set_backend(kernels::parse_backend(backend));
    if (*seg) {
      return cmd_segment(seg_in, seg_stats, marker, out);
    }
    if (*bpe) {
      return cmd_bpe_train(bpe_data, bpe_vocab, bpe_out, out);
    }
    if (*train) {
      RunConfig cfg = train_cfg.empty() ? RunConfig{} : load_run_config(train_cfg);
      if (train_seed) cfg.train.seed = *train_seed;
      if (train_steps) cfg.train.steps = *train_steps, cfg.train.flop_budget = 0.0;
      if (train_data) cfg.data.path = *train_data;
      if (print_config) {
        out << to_json(cfg).dump(2) << '\n';
        return kExitOk;
      }
      if (train_out.empty()) {
        err << "train: --out is required\n";
        return kExitUsage;
      }
      const TrainSummary s = train_loop(cfg, train_out, &err);
      out << "steps " << s.steps << "\ntrain_flops " << num(s.train_flops, "%.6g") << '\n';
      if (s.final_eval) {
        out << "eval_bpb " << num(s.final_eval->bpb, "%.6f") << " +- "
            << num(s.final_eval->stderr_, "%.6f") << '\n';
      }
      return kExitOk;
    }
    if (*ev) {
      const Checkpoint ck = load_checkpoint(ev_ckpt);
      const EvalResult r = evaluate_checkpoint(ck, ev_data, ev_frac, ev_windows);
      out << "bpb " << num(r.bpb, "%.6f") << " +- " << num(r.stderr_, "%.6f") << "\nwindows "
          << r.windows << "\nbytes " << r.bytes << "\nmasked_targets " << r.masked_targets
          << '\n';
      return kExitOk;
    }
    if (*smp) {
      return cmd_sample(smp_ckpt, smp_prompt, smp_max, smp_temp, smp_seed, out);
    }
    if (*fl) {
      print_flops(load_model_config(fl_cfg), fl_bpt, out);
      return kExitOk;
    }
    if (*gr) {
      return cmd_grid(gr_arch, gr_tier, gr_vocab, gr_patch, gr_out, out);
    }
    if (*pa) {
      return cmd_pareto(pa_in, pa_out, pa_svg, out);
    }
    if (*be) {
      auto lineup = bench_lineup(be_data, be_seed, be_batch, be_vocab);
      if (!be_only.empty()) {
        std::erase_if(lineup, [&](const BenchEntry& e) {
          return std::find(be_only.begin(), be_only.end(), e.id) == be_only.end();
        });
      }
      const auto rows = run_bench(std::move(lineup), be_budget, be_out, &err);
      out << bench_table(rows);
      return kExitOk;
    }
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace spacebyte
