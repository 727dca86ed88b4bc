#include "spacebyte/segmenter.h"

#include <cmath>
#include <stdexcept>

namespace spacebyte {

std::vector<bool> insertion_mask(ByteSpan bytes) {
  std::vector<bool> mask(bytes.size(), false);
  bool prev_spacelike = false;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const bool spacelike = is_spacelike(bytes[i]);
    mask[i] = (spacelike && !prev_spacelike) || bytes[i] == kBos;
    prev_spacelike = spacelike;
  }
  return mask;
}

std::vector<std::size_t> marked_positions(ByteSpan bytes) {
  std::vector<std::size_t> out;
  bool prev_spacelike = false;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const bool spacelike = is_spacelike(bytes[i]);
    if ((spacelike && !prev_spacelike) || bytes[i] == kBos) {
      out.push_back(i);
    }
    prev_spacelike = spacelike;
  }
  return out;
}

PatchBoundaries split_patches(ByteSpan bytes) {
  PatchBoundaries pb;
  pb.total = bytes.size();
  if (bytes.empty()) {
    return pb;
  }
  pb.starts.push_back(0);
  const std::vector<std::size_t> marks = marked_positions(bytes);
  for (std::size_t pos : marks) {
    if (pos + 1 < bytes.size()) {
      pb.starts.push_back(pos + 1);
    }
  }
  pb.has_partial_tail = marks.empty() || marks.back() != bytes.size() - 1;
  return pb;
}

std::size_t PatchStats::percentile(double q) const {
  if (count == 0) {
    return 0;
  }
  if (!(q > 0.0 && q <= 100.0)) {
    throw std::invalid_argument("percentile must be in (0, 100]");
  }
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(count)));
  std::size_t seen = 0;
  for (std::size_t len = 0; len < histogram.size(); ++len) {
    seen += histogram[len];
    if (seen >= rank) {
      return len;
    }
  }
  return histogram.empty() ? 0 : histogram.size() - 1;
}

PatchStats patch_stats(ByteSpan bytes) {
  PatchStats st;
  const PatchBoundaries pb = split_patches(bytes);
  for (std::size_t k = 0; k < pb.complete_count(); ++k) {
    const std::size_t len = pb.patch_end(k) - pb.patch_begin(k);
    if (st.histogram.size() <= len) {
      st.histogram.resize(len + 1, 0);
    }
    ++st.histogram[len];
    ++st.count;
    st.total_bytes += len;
  }
  st.mean_len = st.count ? static_cast<double>(st.total_bytes) / static_cast<double>(st.count) : 0.0;
  return st;
}

void merge_into(PatchStats& into, const PatchStats& from) {
  if (into.histogram.size() < from.histogram.size()) {
    into.histogram.resize(from.histogram.size(), 0);
  }
  for (std::size_t i = 0; i < from.histogram.size(); ++i) {
    into.histogram[i] += from.histogram[i];
  }
  into.count += from.count;
  into.total_bytes += from.total_bytes;
  into.mean_len =
      into.count ? static_cast<double>(into.total_bytes) / static_cast<double>(into.count) : 0.0;
}

}  // namespace spacebyte
