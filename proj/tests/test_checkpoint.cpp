#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spacebyte/error.h"
#include "spacebyte/run.h"
#include "tiny_models.h"

using namespace spacebyte;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path write_corpus(const std::filesystem::path& dir) {
  std::ofstream out(dir / "corpus.txt");
  for (int i = 0; i < 80; ++i) out << "the rain in spain falls mainly on the plain " << i << ". ";
  return dir / "corpus.txt";
}

RunConfig tiny_run(const std::filesystem::path& data) {
  RunConfig rc;
  rc.model = sbtest::tiny_configs()[0];
  rc.train.batch_size = 2;
  rc.train.steps = 6;
  rc.train.eval_every = 3;
  rc.train.lr = 0.003;
  rc.train.seed = 42;
  rc.data.path = data.string();
  rc.data.eval_fraction = 0.2;
  rc.eval.windows = 4;
  rc.eval.batch_size = 2;
  return rc;
}

}  // namespace

TEST_CASE("save and load round trip") {
  const auto dir = sbtest::temp_dir("ckpt");
  for (const auto& cfg : sbtest::tiny_configs()) {
    INFO(kind_name(cfg.kind));
    const auto p = sbtest::init_model<float>(cfg, 1);
    nlohmann::json meta{{"seed", 7}, {"note", "x"}};
    const auto path = (dir / "a.bin").string();
    save_checkpoint(path, cfg, p, nullptr, meta);
    const auto ck = load_checkpoint(path);
    CHECK(ck.config == cfg);
    CHECK(ck.meta == meta);
    CHECK(!ck.vocab);
    REQUIRE(ck.params.size() == p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(ck.params.spec(i).name == p.spec(i).name);
      CHECK(ck.params.spec(i).role == p.spec(i).role);
      const auto a = p.tensor(i).data(), b = ck.params.tensor(i).data();
      CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    }
    const auto batch = sbtest::text_batch(1, cfg.context, 2);
    CHECK(model_forward(cfg, p, batch).loss.item() == model_forward(ck.config, ck.params, batch).loss.item());
  }
}

TEST_CASE("header layout and vocabulary") {
  const auto dir = sbtest::temp_dir("ckpt_hdr");
  auto cfg = ModelConfig::make_transformer(16, 1, 260);
  cfg.head_dim = 8;
  const auto p = sbtest::init_model<float>(cfg, 3);
  const BpeVocab v({{'a', 'b'}, {'c', 'd'}, {257, 258}});
  const auto path = dir / "s.bin";
  save_checkpoint(path.string(), cfg, p, &v);
  const std::string raw = slurp(path);
  const auto nl = raw.find('\n');
  REQUIRE(nl != std::string::npos);
  const auto header = nlohmann::json::parse(raw.substr(0, nl));
  CHECK(header["format_version"] == 1);
  CHECK(header["parameters"][0][2] == "f32");
  CHECK(header["parameters"][0][3] == 0);
  std::size_t floats = 0;
  for (std::size_t i = 0; i < p.size(); ++i) floats += p.tensor(i).numel();
  CHECK(raw.size() - nl - 1 == 4 * floats);
  // first blob value, little-endian
  float first;
  std::memcpy(&first, raw.data() + nl + 1, 4);
  CHECK(first == p.tensor(0).at(0));
  const auto ck = load_checkpoint(path.string());
  REQUIRE(ck.vocab);
  CHECK(ck.vocab->merges() == v.merges());
}

TEST_CASE("corrupt checkpoints are data errors") {
  const auto dir = sbtest::temp_dir("ckpt_bad");
  const auto cfg = sbtest::tiny_configs()[3];
  const auto p = sbtest::init_model<float>(cfg, 4);
  const auto good = dir / "good.bin";
  save_checkpoint(good.string(), cfg, p);
  const std::string raw = slurp(good);
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(dir / name, std::ios::binary) << body;
    return (dir / name).string();
  };
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.bin").string()), DataError);
  CHECK_THROWS_AS(load_checkpoint(write("trunc.bin", raw.substr(0, raw.size() - 3))), DataError);
  CHECK_THROWS_AS(load_checkpoint(write("nonl.bin", "{\"format_version\": 1}")), DataError);
  CHECK_THROWS_AS(load_checkpoint(write("junk.bin", "not json\n1234")), DataError);
  std::string v2 = raw;
  v2.replace(v2.find("\"format_version\":1"), 18, "\"format_version\":9");
  CHECK_THROWS_AS(load_checkpoint(write("v2.bin", v2)), DataError);
}

TEST_CASE("run configs") {
  RunConfig rc;
  rc.model = sbtest::tiny_configs()[2];
  rc.train.steps = 17;
  rc.data.path = "x";
  CHECK(run_config_from_json(to_json(rc)) == rc);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"model", {{"dimm", 3}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"train", {{"steps", "ten"}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"kind", "spacebyte"}, {"dim", 100}}), ConfigError);
  const auto m = model_config_from_json(to_json(rc.model));
  CHECK(m == rc.model);
}

TEST_CASE("training is reproducible and checkpoints evaluate identically") {
  const auto dir = sbtest::temp_dir("train");
  const auto data = write_corpus(dir);
  const auto rc = tiny_run(data);
  const auto a = train_loop(rc, (dir / "a").string());
  const auto b = train_loop(rc, (dir / "b").string());
  const std::string ma = slurp(dir / "a" / "metrics.csv");
  CHECK(ma == slurp(dir / "b" / "metrics.csv"));
  CHECK(ma.rfind("step,bytes_seen,train_flops,lr,train_loss,eval_bpb,eval_stderr\n", 0) == 0);
  CHECK(std::count(ma.begin(), ma.end(), '\n') == 1 + 7);
  CHECK(slurp(dir / "a" / "checkpoint.bin") == slurp(dir / "b" / "checkpoint.bin"));

  REQUIRE(a.final_eval);
  const auto ck = load_checkpoint((dir / "a" / "checkpoint.bin").string());
  const auto e = evaluate_checkpoint(ck, data.string());
  CHECK(e.bpb == a.final_eval->bpb);
  CHECK(e.stderr_ == a.final_eval->stderr_);

  // bytes, FLOPs and steps line up
  CHECK(a.steps == 6);
  CHECK(a.bytes_seen == 6.0 * 2 * rc.model.context);
  CHECK(a.train_flops == doctest::Approx(3 * a.flops.flops_per_byte * a.bytes_seen).epsilon(1e-3));

  auto other = rc;
  other.train.seed = 43;
  train_loop(other, (dir / "c").string());
  CHECK(slurp(dir / "c" / "metrics.csv") != ma);
}

TEST_CASE("subword runs train their own vocabulary") {
  const auto dir = sbtest::temp_dir("train_sw");
  const auto data = write_corpus(dir);
  auto rc = tiny_run(data);
  rc.model = ModelConfig::make_transformer(32, 1, 300);
  rc.model.head_dim = 8;
  rc.model.context = 32;
  rc.model.window = 32;
  const auto s = train_loop(rc, (dir / "run").string());
  CHECK(s.model.vocab_size <= 300);
  CHECK(s.model.vocab_size > 257);
  CHECK(std::filesystem::exists(dir / "run" / "vocab.json"));
  const auto ck = load_checkpoint((dir / "run" / "checkpoint.bin").string());
  REQUIRE(ck.vocab);
  CHECK(evaluate_checkpoint(ck, data.string()).bpb == s.final_eval->bpb);
}

TEST_CASE("a step budget can come from a FLOP budget") {
  const auto dir = sbtest::temp_dir("train_budget");
  const auto data = write_corpus(dir);
  auto rc = tiny_run(data);
  rc.train.steps = 0;
  const double fpb = flops_per_byte(rc.model).flops_per_byte;
  rc.train.flop_budget = 3 * fpb * 2 * rc.model.context * 4.5;
  const auto s = train_loop(rc, (dir / "run").string());
  CHECK(s.steps == 4);
  CHECK(s.train_flops <= rc.train.flop_budget);
}
