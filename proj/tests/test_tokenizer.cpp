#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <string>

#include "spacebyte/error.h"
#include "spacebyte/tokenizer.h"
#include "test_util.h"

using namespace spacebyte;

namespace {

using Merge = std::pair<std::int32_t, std::int32_t>;

std::vector<std::int32_t> encode(const BpeVocab& v, const std::string& s) {
  return v.encode(as_bytes(s));
}

// Reference trainer: recount every pair from scratch after each merge and
// apply it left to right. A pair's serial is fixed the first time a scan
// sees it; equal counts go to the lower serial.
std::vector<Merge> brute_force_train(const std::string& text, std::size_t vocab_size) {
  std::vector<std::int32_t> seq;
  for (unsigned char c : text) seq.push_back(c == 255 ? BpeVocab::kBosId : c);
  std::vector<Merge> merges;
  std::map<Merge, std::size_t> serial;
  while (BpeVocab::kBaseSize + merges.size() < vocab_size) {
    std::map<Merge, int> count;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      if (seq[i] == BpeVocab::kBosId || seq[i + 1] == BpeVocab::kBosId) continue;
      const Merge pr{seq[i], seq[i + 1]};
      serial.try_emplace(pr, serial.size());
      ++count[pr];
    }
    Merge best{-1, -1};
    int best_n = 1;
    for (const auto& [pair, n] : count) {
      if (n > best_n || (n == best_n && best.first >= 0 && serial[pair] < serial[best])) {
        best = pair;
        best_n = n;
      }
    }
    if (best.first < 0) break;
    const auto id = static_cast<std::int32_t>(BpeVocab::kBaseSize + merges.size());
    std::vector<std::int32_t> next;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i + 1 < seq.size() && seq[i] == best.first && seq[i + 1] == best.second) {
        next.push_back(id);
        ++i;
      } else {
        next.push_back(seq[i]);
      }
    }
    seq = std::move(next);
    merges.push_back(best);
  }
  return merges;
}

}  // namespace

TEST_CASE("training examples") {
  CHECK(bpe_train(as_bytes("aaab"), 258).merges() == std::vector<Merge>{{'a', 'a'}});
  CHECK(bpe_train(as_bytes("abab"), 258).merges() == std::vector<Merge>{{'a', 'b'}});
  CHECK(bpe_train(as_bytes("abab"), 257).merges().empty());
  CHECK(bpe_train(as_bytes("abab"), 257).size() == 257);
  // Nothing occurs twice: stop early.
  CHECK(bpe_train(as_bytes("abcd"), 300).merges().empty());
  CHECK_THROWS_AS(bpe_train(as_bytes(""), 300), InputError);
  CHECK_THROWS_AS(bpe_train(as_bytes("ab"), 256), InputError);
}

TEST_CASE("merges build on earlier merges") {
  const auto v = bpe_train(as_bytes("abcabcabc"), 259);
  REQUIRE(v.merges().size() == 2);
  CHECK(v.merges()[0] == Merge{'a', 'b'});
  CHECK(v.merges()[1] == Merge{257, 'c'});
  CHECK(v.bytes_of(258) == "abc");
  CHECK(encode(v, "abcab") == std::vector<std::int32_t>{258, 257});
}

TEST_CASE("BOS never takes part in a merge") {
  std::string text;
  for (int i = 0; i < 20; ++i) text += std::string("\xff") + "hi";
  const auto v = bpe_train(as_bytes(text), 270);
  for (const auto& [l, r] : v.merges()) {
    CHECK(l != BpeVocab::kBosId);
    CHECK(r != BpeVocab::kBosId);
  }
  const auto ids = encode(v, "\xffhi");
  CHECK(ids.front() == BpeVocab::kBosId);
  CHECK(v.decode({BpeVocab::kBosId}) == "\xff");
  CHECK_THROWS_AS(BpeVocab({{256, 'a'}}), InputError);
  CHECK_THROWS_AS(BpeVocab({{'a', 300}}), InputError);
}

TEST_CASE("training agrees with a brute-force reference") {
  CounterRng rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    std::string text;
    const std::size_t n = 20 + rng.below(200);
    for (std::size_t i = 0; i < n; ++i) text += "ab c\xff"[rng.below(trial % 2 ? 5 : 4)];
    const std::size_t V = 257 + rng.below(30);
    INFO(trial);
    CHECK(bpe_train(as_bytes(text), V).merges() == brute_force_train(text, V));
  }
}

TEST_CASE("encoding applies merges lowest rank first, leftmost on ties") {
  const BpeVocab v({{'a', 'a'}});
  CHECK(encode(v, "aaab") == std::vector<std::int32_t>{257, 'a', 'b'});
  CHECK(v.decode({257, 'a', 'b'}) == "aaab");
  CHECK(encode(v, "").empty());
  // "bc" outranks "ab", so "abc" -> a, bc.
  const BpeVocab w({{'b', 'c'}, {'a', 'b'}});
  CHECK(encode(w, "abc") == std::vector<std::int32_t>{'a', 257});
  CHECK(encode(w, "abab") == std::vector<std::int32_t>{258, 258});
  CHECK_THROWS_AS(w.decode({259}), InputError);
  CHECK_THROWS_AS(w.decode({-1}), InputError);
}

TEST_CASE("decode inverts encode on random blobs") {
  CounterRng rng(2);
  std::string corpus;
  for (int i = 0; i < 5000; ++i) corpus += "the quick brown fox "[rng.below(20)];
  const auto v = bpe_train(as_bytes(corpus), 400);
  CHECK(v.size() > 300);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s(rng.below(64), '\0');
    for (auto& c : s) c = static_cast<char>(trial % 2 ? rng.below(256) : "the fox "[rng.below(8)]);
    CHECK(v.decode(encode(v, s)) == s);
  }
}

TEST_CASE("trained vocab compresses its corpus") {
  std::string corpus;
  for (int i = 0; i < 200; ++i) corpus += "to be or not to be that is the question ";
  const auto v = bpe_train(as_bytes(corpus), 300);
  const double bpt = double(corpus.size()) / encode(v, corpus).size();
  CHECK(bpt > 3.0);
}

TEST_CASE("json roundtrip and determinism") {
  const auto v = bpe_train(as_bytes("hello hello help held"), 270);
  const auto back = BpeVocab::from_json(v.to_json());
  CHECK(back.merges() == v.merges());
  CHECK(bpe_train(as_bytes("hello hello help held"), 270).merges() == v.merges());
  const auto dir = sbtest::temp_dir("bpe");
  v.save((dir / "v.json").string());
  CHECK(BpeVocab::load((dir / "v.json").string()).merges() == v.merges());
  CHECK_THROWS(BpeVocab::from_json("{\"merges\": 3}"));
  CHECK_THROWS(BpeVocab::load((dir / "missing.json").string()));
}
