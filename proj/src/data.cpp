#include "spacebyte/data.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spacebyte/error.h"
#include "spacebyte/segmenter.h"

namespace spacebyte {
namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + p.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Corpus build_corpus(const std::vector<std::string>& documents) {
  Corpus c;
  std::size_t total = documents.size();
  for (const auto& d : documents) {
    total += d.size();
  }
  c.bytes.reserve(total);
  for (std::size_t i = 0; i < documents.size(); ++i) {
    const std::string& d = documents[i];
    for (std::size_t j = 0; j < d.size(); ++j) {
      const auto b = static_cast<std::uint8_t>(d[j]);
      if (b == kBos || b == kReservedByte) {
        throw DataError("document " + std::to_string(i) + " contains reserved byte " +
                        std::to_string(b) + " at offset " + std::to_string(j));
      }
    }
    c.bytes.push_back(kBos);
    c.bytes.insert(c.bytes.end(), d.begin(), d.end());
  }
  c.documents = documents.size();
  return c;
}

std::vector<std::string> load_documents(const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const fs::path root(path);
  if (fs::is_directory(root, ec)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file()) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    std::vector<std::string> docs;
    docs.reserve(files.size());
    for (const auto& f : files) {
      docs.push_back(read_file(f));
    }
    if (docs.empty()) {
      throw DataError("no files found under " + path);
    }
    return docs;
  }
  if (!fs::is_regular_file(root, ec)) {
    throw DataError("data path " + path + " does not exist");
  }
  if (root.extension() != ".jsonl") {
    return {read_file(root)};
  }
  std::istringstream lines(read_file(root));
  std::vector<std::string> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected a \"text\" string");
    }
    docs.push_back(j["text"].get<std::string>());
  }
  return docs;
}

std::vector<std::int32_t> byte_tokens(std::span<const std::uint8_t> bytes) {
  return std::vector<std::int32_t>(bytes.begin(), bytes.end());
}

Sample sample_context(std::span<const std::int32_t> stream, std::size_t context,
                      std::int32_t bos, CounterRng& rng) {
  const std::size_t n = stream.size();
  if (context == 0 || n < context) {
    throw DataError("stream of " + std::to_string(n) + " tokens is shorter than the context " +
                    std::to_string(context));
  }
  const std::size_t start = static_cast<std::size_t>(rng.below(n - context + 1));
  // Context is bos followed by stream[first, first + T - 1).
  std::size_t first = start;
  for (std::size_t i = start; i < start + context; ++i) {
    if (stream[i] == bos) {
      first = i + 1;
      break;
    }
  }
  first = std::min(first, n + 1 - context);

  Sample s;
  s.tokens.resize(context);
  s.targets.resize(context);
  s.tokens[0] = bos;
  for (std::size_t t = 1; t < context; ++t) {
    s.tokens[t] = stream[first + t - 1];
  }
  for (std::size_t t = 0; t < context; ++t) {
    const std::size_t j = first + t;
    s.targets[t] = j < n ? stream[j] : -1;
  }
  return s;
}

std::size_t split_point(std::size_t length, double eval_fraction) {
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) {
    throw ConfigError("eval fraction must be in [0, 1), got " + std::to_string(eval_fraction));
  }
  return length - static_cast<std::size_t>(std::floor(static_cast<double>(length) * eval_fraction));
}

std::vector<Sample> eval_windows(std::span<const std::int32_t> stream, std::size_t context,
                                 std::int32_t bos, std::size_t max_windows) {
  std::vector<Sample> out;
  if (context == 0) {
    return out;
  }
  for (std::size_t a = 0; a + context <= stream.size(); a += context) {
    if (max_windows && out.size() == max_windows) {
      break;
    }
    Sample s;
    s.tokens.resize(context);
    s.tokens[0] = bos;
    std::copy_n(stream.begin() + static_cast<std::ptrdiff_t>(a), context - 1,
                s.tokens.begin() + 1);
    s.targets.assign(stream.begin() + static_cast<std::ptrdiff_t>(a),
                     stream.begin() + static_cast<std::ptrdiff_t>(a + context));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace spacebyte
