#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spacebyte/segmenter.h"

namespace spacebyte {

// Byte-level BPE vocabulary. Ids 0-255 are raw bytes, 256 is BOS, and merge
// k produces id 257 + k. Byte 255 in the input always encodes as BOS.
class BpeVocab {
 public:
  static constexpr std::int32_t kBosId = 256;
  static constexpr std::size_t kBaseSize = 257;

  BpeVocab() = default;
  // Throws InputError if a merge refers to an id that does not exist yet or
  // to BOS.
  explicit BpeVocab(std::vector<std::pair<std::int32_t, std::int32_t>> merges);

  std::size_t size() const noexcept { return kBaseSize + merges_.size(); }
  const std::vector<std::pair<std::int32_t, std::int32_t>>& merges() const noexcept {
    return merges_;
  }
  // Byte expansion of one id. Throws InputError for unknown ids.
  const std::string& bytes_of(std::int32_t id) const;

  std::vector<std::int32_t> encode(ByteSpan bytes) const;
  // Throws InputError for unknown ids.
  std::string decode(const std::vector<std::int32_t>& ids) const;

  // {"vocab_size": N, "merges": [[l, r], ...]}
  std::string to_json() const;
  static BpeVocab from_json(const std::string& text);
  static BpeVocab load(const std::string& path);
  void save(const std::string& path) const;

 private:
  void rebuild();

  std::vector<std::pair<std::int32_t, std::int32_t>> merges_;
  std::vector<std::string> expansions_;
};

// Greedy most-frequent-pair training over the whole corpus with no
// pre-tokenisation and no normalisation. Stops at vocab_size ids or when no
// pair occurs twice. Equal counts go to the pair seen first. Pairs touching
// BOS are never merged. Throws InputError for an empty corpus or
// vocab_size < 257.
BpeVocab bpe_train(ByteSpan corpus, std::size_t vocab_size);

}  // namespace spacebyte
