#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace spacebyte {

// Beginning-of-sequence marker. Valid UTF-8 never uses 0xFE or 0xFF, so 0xFF
// encodes BOS and 0xFE stays reserved.
inline constexpr std::uint8_t kBos = 255;
inline constexpr std::uint8_t kReservedByte = 254;

using ByteSpan = std::span<const std::uint8_t>;

inline ByteSpan as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// A byte is spacelike when it is not an ASCII letter, an ASCII digit, or a
// UTF-8 continuation byte (0x80-0xBF). Leading bytes of multi-byte
// characters (>= 0xC0) are spacelike.
constexpr bool is_spacelike(std::uint8_t b) noexcept {
  return b < '0' || (b > '9' && b < 'A') || (b > 'Z' && b < 'a') ||
         (b > 'z' && b < 0x80) || b >= 0xC0;
}

// mask[i] is true where the global blocks run: a spacelike byte whose
// predecessor is not spacelike, or a BOS.
std::vector<bool> insertion_mask(ByteSpan bytes);

// Positions where the mask is true, in increasing order.
std::vector<std::size_t> marked_positions(ByteSpan bytes);

// Patch start offsets. Patch k spans [starts[k], starts[k+1]) and the last
// patch spans [starts.back(), bytes.size()). A patch closes right after a
// marked position; the bytes after the final mark form a trailing partial
// patch.
struct PatchBoundaries {
  std::vector<std::size_t> starts;
  std::size_t total = 0;
  // True when the final patch does not end on a marked byte.
  bool has_partial_tail = false;

  std::size_t size() const noexcept { return starts.size(); }
  std::size_t patch_begin(std::size_t k) const { return starts.at(k); }
  std::size_t patch_end(std::size_t k) const {
    return k + 1 < starts.size() ? starts[k + 1] : total;
  }
  std::size_t complete_count() const noexcept {
    return starts.size() - (has_partial_tail ? 1 : 0);
  }
};

PatchBoundaries split_patches(ByteSpan bytes);

struct PatchStats {
  std::size_t count = 0;
  double mean_len = 0.0;
  std::size_t total_bytes = 0;
  // histogram[n] = number of complete patches of length n.
  std::vector<std::size_t> histogram;

  // Nearest-rank percentile of the patch length, q in (0, 100].
  std::size_t percentile(double q) const;
};

// Statistics over complete patches only; the trailing partial patch is
// excluded.
PatchStats patch_stats(ByteSpan bytes);

// Accumulates statistics across several streams (e.g. the documents of a
// corpus) without concatenating them.
void merge_into(PatchStats& into, const PatchStats& from);

}  // namespace spacebyte
