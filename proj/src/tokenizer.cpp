#include "spacebyte/tokenizer.h"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <json.hpp>

#include "spacebyte/error.h"

namespace spacebyte {
namespace {

using Pair = std::pair<std::int32_t, std::int32_t>;

std::uint64_t pair_key(std::int32_t a, std::int32_t b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

std::int32_t byte_token(std::uint8_t b) {
  return b == kBos ? BpeVocab::kBosId : static_cast<std::int32_t>(b);
}

}  // namespace

BpeVocab::BpeVocab(std::vector<Pair> merges) : merges_(std::move(merges)) { rebuild(); }

void BpeVocab::rebuild() {
  expansions_.clear();
  expansions_.reserve(size());
  for (int b = 0; b < 256; ++b) {
    expansions_.emplace_back(1, static_cast<char>(b));
  }
  expansions_.emplace_back(1, static_cast<char>(kBos));
  for (std::size_t k = 0; k < merges_.size(); ++k) {
    const auto [l, r] = merges_[k];
    const auto limit = static_cast<std::int32_t>(kBaseSize + k);
    if (l < 0 || r < 0 || l >= limit || r >= limit || l == kBosId || r == kBosId) {
      throw InputError("merge " + std::to_string(k) + " (" + std::to_string(l) + ", " +
                       std::to_string(r) + ") refers to an invalid id");
    }
    expansions_.push_back(expansions_[l] + expansions_[r]);
  }
}

const std::string& BpeVocab::bytes_of(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= expansions_.size()) {
    throw InputError("token id " + std::to_string(id) + " is outside the vocabulary of size " +
                     std::to_string(size()));
  }
  return expansions_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> BpeVocab::encode(ByteSpan bytes) const {
  const std::size_t n = bytes.size();
  std::vector<std::int32_t> tok(n);
  for (std::size_t i = 0; i < n; ++i) {
    tok[i] = byte_token(bytes[i]);
  }
  if (n < 2 || merges_.empty()) {
    return tok;
  }
  std::unordered_map<std::uint64_t, std::int32_t> rank;
  rank.reserve(merges_.size() * 2);
  for (std::size_t k = 0; k < merges_.size(); ++k) {
    rank.emplace(pair_key(merges_[k].first, merges_[k].second), static_cast<std::int32_t>(k));
  }

  std::vector<std::int64_t> prev(n), next(n);
  for (std::size_t i = 0; i < n; ++i) {
    prev[i] = static_cast<std::int64_t>(i) - 1;
    next[i] = i + 1 < n ? static_cast<std::int64_t>(i + 1) : -1;
  }
  // (rank, left position, right token check) min-heap; stale entries are
  // skipped when popped.
  using Entry = std::tuple<std::int32_t, std::int64_t, std::int32_t, std::int32_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  auto offer = [&](std::int64_t left) {
    if (left < 0 || next[left] < 0) {
      return;
    }
    const std::int32_t a = tok[left];
    const std::int32_t b = tok[next[left]];
    const auto it = rank.find(pair_key(a, b));
    if (it != rank.end()) {
      heap.emplace(it->second, left, a, b);
    }
  };
  for (std::size_t i = 0; i + 1 < n; ++i) {
    offer(static_cast<std::int64_t>(i));
  }
  std::vector<bool> alive(n, true);
  while (!heap.empty()) {
    const auto [r, left, a, b] = heap.top();
    heap.pop();
    if (!alive[left] || tok[left] != a || next[left] < 0 || tok[next[left]] != b) {
      continue;
    }
    const std::int64_t right = next[left];
    tok[left] = static_cast<std::int32_t>(kBaseSize) + r;
    alive[right] = false;
    next[left] = next[right];
    if (next[right] >= 0) {
      prev[next[right]] = left;
    }
    offer(prev[left]);
    offer(left);
  }
  std::vector<std::int32_t> out;
  for (std::int64_t i = 0; i >= 0; i = next[i]) {
    out.push_back(tok[i]);
  }
  return out;
}

std::string BpeVocab::decode(const std::vector<std::int32_t>& ids) const {
  std::string out;
  for (const std::int32_t id : ids) {
    out += bytes_of(id);
  }
  return out;
}

std::string BpeVocab::to_json() const {
  nlohmann::json j;
  j["vocab_size"] = size();
  j["merges"] = nlohmann::json::array();
  for (const auto& [l, r] : merges_) {
    j["merges"].push_back({l, r});
  }
  return j.dump();
}

BpeVocab BpeVocab::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("vocabulary is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("merges") || !j["merges"].is_array()) {
    throw InputError("vocabulary JSON needs a \"merges\" array");
  }
  std::vector<Pair> merges;
  for (const auto& m : j["merges"]) {
    if (!m.is_array() || m.size() != 2 || !m[0].is_number_integer() ||
        !m[1].is_number_integer()) {
      throw InputError("each merge must be a pair of integer ids");
    }
    merges.emplace_back(m[0].get<std::int32_t>(), m[1].get<std::int32_t>());
  }
  BpeVocab v(std::move(merges));
  if (j.contains("vocab_size") && j["vocab_size"].get<std::size_t>() != v.size()) {
    throw InputError("vocab_size " + j["vocab_size"].dump() + " disagrees with " +
                     std::to_string(v.merges().size()) + " merges");
  }
  return v;
}

BpeVocab BpeVocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open vocabulary file " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void BpeVocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write vocabulary file " + path);
  }
  out << to_json() << '\n';
}

BpeVocab bpe_train(ByteSpan corpus, std::size_t vocab_size) {
  if (corpus.empty()) {
    throw InputError("cannot train a tokenizer on an empty corpus");
  }
  if (vocab_size < BpeVocab::kBaseSize) {
    throw InputError("vocab_size must be at least 257, got " + std::to_string(vocab_size));
  }
  const auto n = static_cast<std::int64_t>(corpus.size());
  std::vector<std::int32_t> tok(corpus.size());
  std::vector<std::int64_t> prev(corpus.size()), next(corpus.size());
  for (std::int64_t i = 0; i < n; ++i) {
    tok[i] = byte_token(corpus[i]);
    prev[i] = i - 1;
    next[i] = i + 1 < n ? i + 1 : -1;
  }

  struct PairInfo {
    std::int64_t count = 0;
    std::int64_t serial = 0;
    std::vector<std::int64_t> positions;  // left positions, possibly stale
  };
  std::unordered_map<std::uint64_t, PairInfo> pairs;
  std::int64_t next_serial = 0;
  // Max count first, then lowest serial (first seen).
  using Entry = std::tuple<std::int64_t, std::int64_t, std::uint64_t>;
  std::priority_queue<Entry> heap;

  auto bump = [&](std::int64_t left, std::int64_t delta) {
    if (left < 0 || next[left] < 0) {
      return;
    }
    const std::int32_t a = tok[left];
    const std::int32_t b = tok[next[left]];
    if (a == BpeVocab::kBosId || b == BpeVocab::kBosId) {
      return;
    }
    const std::uint64_t key = pair_key(a, b);
    auto [it, fresh] = pairs.try_emplace(key);
    PairInfo& info = it->second;
    if (fresh) {
      info.serial = next_serial++;
    }
    info.count += delta;
    if (delta > 0) {
      info.positions.push_back(left);
    }
    heap.emplace(info.count, -info.serial, key);
  };

  // Initial counts without heap churn.
  for (std::int64_t i = 0; i + 1 < n; ++i) {
    const std::int32_t a = tok[i];
    const std::int32_t b = tok[i + 1];
    if (a == BpeVocab::kBosId || b == BpeVocab::kBosId) {
      continue;
    }
    auto [it, fresh] = pairs.try_emplace(pair_key(a, b));
    if (fresh) {
      it->second.serial = next_serial++;
    }
    ++it->second.count;
    it->second.positions.push_back(i);
  }
  for (const auto& [key, info] : pairs) {
    heap.emplace(info.count, -info.serial, key);
  }

  std::vector<Pair> merges;
  std::vector<bool> alive(corpus.size(), true);
  while (BpeVocab::kBaseSize + merges.size() < vocab_size && !heap.empty()) {
    const auto [count, neg_serial, key] = heap.top();
    heap.pop();
    const auto it = pairs.find(key);
    if (it == pairs.end() || it->second.count != count) {
      continue;
    }
    if (count < 2) {
      break;
    }
    const auto a = static_cast<std::int32_t>(key >> 32);
    const auto b = static_cast<std::int32_t>(key & 0xFFFFFFFFu);
    const auto fresh_id = static_cast<std::int32_t>(BpeVocab::kBaseSize + merges.size());
    merges.emplace_back(a, b);

    std::vector<std::int64_t> positions = std::move(it->second.positions);
    pairs.erase(it);
    std::sort(positions.begin(), positions.end());
    for (const std::int64_t p : positions) {
      if (!alive[p] || tok[p] != a || next[p] < 0 || tok[next[p]] != b) {
        continue;
      }
      const std::int64_t q = next[p];
      const std::int64_t left = prev[p];
      bump(left, -1);
      if (next[q] >= 0) {
        bump(q, -1);
      }
      tok[p] = fresh_id;
      alive[q] = false;
      next[p] = next[q];
      if (next[q] >= 0) {
        prev[next[q]] = p;
      }
      bump(left, +1);
      bump(p, +1);
    }
    // bump() may have recreated the merged pair's own entry from the
    // decrements above; it has no live occurrences left.
    pairs.erase(key);
  }
  return BpeVocab(std::move(merges));
}

}  // namespace spacebyte
