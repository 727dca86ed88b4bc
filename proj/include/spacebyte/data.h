#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spacebyte/rng.h"

namespace spacebyte {

// Concatenated documents, each preceded by BOS (255).
struct Corpus {
  std::vector<std::uint8_t> bytes;
  std::size_t documents = 0;
};

// Throws DataError naming the document and offset of any 254/255 byte.
Corpus build_corpus(const std::vector<std::string>& documents);

// A directory (every regular file below it, sorted by path, one document
// each), a .jsonl file with a "text" string per line, or any other single
// file as one document. Throws DataError.
std::vector<std::string> load_documents(const std::string& path);

// Widen bytes to token ids without change.
std::vector<std::int32_t> byte_tokens(std::span<const std::uint8_t> bytes);

struct Sample {
  std::vector<std::int32_t> tokens;   // [T], tokens[0] == bos
  std::vector<std::int32_t> targets;  // [T], -1 past the end of the stream
};

// Draws a window of T positions; if it holds a BOS the context restarts at
// the first one, otherwise BOS is prepended to the first T - 1 drawn
// tokens. Contexts that would run off the end are pulled back to finish at
// the last token. Throws DataError if the stream is shorter than T.
Sample sample_context(std::span<const std::int32_t> stream, std::size_t context,
                      std::int32_t bos, CounterRng& rng);

// The cut between training data and the held-out tail.
std::size_t split_point(std::size_t length, double eval_fraction);

// Non-overlapping evaluation windows over stream: window k predicts
// stream[k T .. (k + 1) T) from BOS followed by the preceding T - 1 tokens
// of the window. Only whole windows are produced, at most max_windows when
// that is nonzero.
std::vector<Sample> eval_windows(std::span<const std::int32_t> stream, std::size_t context,
                                 std::int32_t bos, std::size_t max_windows = 0);

}  // namespace spacebyte
