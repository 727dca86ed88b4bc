#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "spacebyte/data.h"
#include "spacebyte/error.h"
#include "test_util.h"

using namespace spacebyte;

namespace {

std::vector<std::int32_t> stream(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

// The first draw of sample_context, replayed.
std::size_t first_start(std::uint64_t seed, std::size_t n, std::size_t T) {
  CounterRng r(seed);
  return r.below(n - T + 1);
}

}  // namespace

TEST_CASE("build_corpus") {
  const auto c = build_corpus({"A", "B"});
  CHECK(c.bytes == std::vector<std::uint8_t>{255, 65, 255, 66});
  CHECK(c.documents == 2);
  CHECK(build_corpus({}).bytes.empty());
  try {
    build_corpus({"ok", std::string("ab\xff")});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("document 1") != std::string::npos);
    CHECK(msg.find("offset 2") != std::string::npos);
  }
  CHECK_THROWS_AS(build_corpus({std::string("\xfe")}), DataError);
}

TEST_CASE("sampling examples") {
  const int A = 'A', B = 'B', C = 'C', D = 'D';
  const auto s = stream({255, A, B, 255, C, D});
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    if (first_start(seed, s.size(), 3) != 2) continue;
    CounterRng rng(seed);
    const auto sample = sample_context(s, 3, 255, rng);
    CHECK(sample.tokens == stream({255, C, D}));
    CHECK(sample.targets == stream({C, D, -1}));
    ++hits;
  }
  CHECK(hits > 0);

  const int X = 'X', Y = 'Y', Z = 'Z';
  const auto plain = stream({X, Y, Z});
  CounterRng rng(1);
  const auto p = sample_context(plain, 3, 255, rng);
  CHECK(p.tokens == stream({255, X, Y}));
  CHECK(p.targets == stream({X, Y, Z}));

  CHECK_THROWS_AS(sample_context(stream({}), 3, 255, rng), DataError);
  CHECK_THROWS_AS(sample_context(stream({1, 2}), 3, 255, rng), DataError);
}

TEST_CASE("alignment clamps at the end of the stream") {
  // BOS near the end: the aligned context would overrun and is pulled back.
  const auto s = stream({1, 2, 3, 4, 5, 255, 6});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(seed);
    const auto smp = sample_context(s, 4, 255, rng);
    const std::size_t start = first_start(seed, s.size(), 4);
    if (start + 4 > 5) {
      CHECK(smp.tokens == stream({255, 5, 255, 6}));
      CHECK(smp.targets == stream({5, 255, 6, -1}));
    }
  }
}

TEST_CASE("every sample begins with BOS and is deterministic") {
  CounterRng gen(3);
  std::vector<std::string> docs;
  for (int d = 0; d < 30; ++d) {
    std::string doc(1 + gen.below(40), 'x');
    for (auto& c : doc) c = static_cast<char>('a' + gen.below(26));
    docs.push_back(doc);
  }
  const auto corpus = build_corpus(docs);
  const auto ids = byte_tokens(corpus.bytes);
  CounterRng a(4), b(4);
  for (int i = 0; i < 10000; ++i) {
    const auto x = sample_context(ids, 16, 255, a);
    const auto y = sample_context(ids, 16, 255, b);
    REQUIRE(x.tokens.size() == 16);
    CHECK(x.tokens[0] == 255);
    CHECK(x.tokens == y.tokens);
    // targets are the tokens shifted by one
    for (std::size_t t = 0; t + 1 < 16; ++t) CHECK(x.targets[t] == x.tokens[t + 1]);
  }
}

TEST_CASE("split and eval windows") {
  CHECK(split_point(1000, 0.1) == 900);
  CHECK(split_point(7, 0.0) == 7);
  CHECK(split_point(10, 0.25) == 8);
  CHECK_THROWS_AS(split_point(10, 1.0), ConfigError);
  CHECK_THROWS_AS(split_point(10, -0.1), ConfigError);

  std::vector<std::int32_t> s;
  for (int i = 0; i < 10; ++i) s.push_back(i);
  const auto w = eval_windows(s, 4, 255);
  REQUIRE(w.size() == 2);
  CHECK(w[0].tokens == stream({255, 0, 1, 2}));
  CHECK(w[0].targets == stream({0, 1, 2, 3}));
  CHECK(w[1].tokens == stream({255, 4, 5, 6}));
  CHECK(w[1].targets == stream({4, 5, 6, 7}));
  CHECK(eval_windows(s, 4, 255, 1).size() == 1);
  CHECK(eval_windows(s, 11, 255).empty());
}

TEST_CASE("document loading") {
  const auto dir = sbtest::temp_dir("docs");
  std::filesystem::create_directories(dir / "tree" / "sub");
  std::ofstream(dir / "tree" / "b.txt") << "second";
  std::ofstream(dir / "tree" / "a.txt") << "first";
  std::ofstream(dir / "tree" / "sub" / "c.txt") << "third";
  CHECK(load_documents((dir / "tree").string()) == std::vector<std::string>{"first", "second", "third"});

  std::ofstream(dir / "d.jsonl") << "{\"text\": \"one\\n\"}\n\n{\"text\": \"two\", \"id\": 3}\n";
  CHECK(load_documents((dir / "d.jsonl").string()) == std::vector<std::string>{"one\n", "two"});

  std::ofstream(dir / "plain.txt") << "just text";
  CHECK(load_documents((dir / "plain.txt").string()) == std::vector<std::string>{"just text"});

  std::ofstream(dir / "bad.jsonl") << "{\"txt\": 1}\n";
  CHECK_THROWS_AS(load_documents((dir / "bad.jsonl").string()), DataError);
  std::ofstream(dir / "worse.jsonl") << "not json\n";
  CHECK_THROWS_AS(load_documents((dir / "worse.jsonl").string()), DataError);
  CHECK_THROWS_AS(load_documents((dir / "nope").string()), DataError);
}
