#include "spacebyte/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "spacebyte/architectures.h"
#include "spacebyte/config_io.h"
#include "spacebyte/error.h"

namespace spacebyte {
namespace {

using nlohmann::json;

std::uint32_t to_little(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    return __builtin_bswap32(x);
  }
  return x;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamStore<float>& params, const BpeVocab* vocab, const json& meta) {
  json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["model_config"] = to_json(cfg);
  json manifest = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ParamSpec& spec = params.spec(i);
    manifest.push_back({spec.name, spec.shape, "f32", offset});
    offset += spec.numel() * sizeof(float);
  }
  header["parameters"] = std::move(manifest);
  header["tokenizer"] = vocab ? json::parse(vocab->to_json()) : json();
  header["meta"] = meta;

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write checkpoint " + tmp);
    }
    out << header.dump() << '\n';
    std::vector<std::uint32_t> buf;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& data = params.tensor(i).data();
      buf.resize(data.size());
      for (std::size_t k = 0; k < data.size(); ++k) {
        buf[k] = to_little(std::bit_cast<std::uint32_t>(data[k]));
      }
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
    }
    if (!out) {
      throw DataError("failed while writing checkpoint " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move checkpoint into place at " + path);
  }
}

namespace {

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open checkpoint " + path);
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path + ": missing checkpoint header");
  }
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path + ": checkpoint header is not valid JSON: " + e.what());
  }
  if (!header.is_object() || header.value("format_version", -1) != kCheckpointFormatVersion) {
    throw DataError(path + ": unsupported checkpoint format version");
  }

  Checkpoint ck;
  try {
    ck.config = model_config_from_json(header.at("model_config"));
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  }
  if (header.contains("tokenizer") && !header["tokenizer"].is_null()) {
    ck.vocab = BpeVocab::from_json(header["tokenizer"].dump());
  }
  if (header.contains("meta")) {
    ck.meta = header["meta"];
  }
  ck.params = ParamStore<float>(model_param_specs(ck.config));

  const json& manifest = header.at("parameters");
  if (!manifest.is_array() || manifest.size() != ck.params.size()) {
    throw DataError(path + ": parameter manifest does not match the model config");
  }
  const std::streamoff blob_start = in.tellg();
  std::vector<std::uint32_t> buf;
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const json& e = manifest[i];
    const ParamSpec& spec = ck.params.spec(i);
    if (!e.is_array() || e.size() != 4 || e[0] != spec.name ||
        e[1].get<Shape>() != spec.shape || e[2] != "f32") {
      throw DataError(path + ": manifest entry " + std::to_string(i) + " does not match " +
                      spec.name + " " + shape_str(spec.shape));
    }
    in.seekg(blob_start + static_cast<std::streamoff>(e[3].get<std::size_t>()));
    buf.resize(spec.numel());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
    if (!in) {
      throw DataError(path + ": checkpoint truncated in " + spec.name);
    }
    auto data = ck.params.tensor(i).data_mut();
    for (std::size_t k = 0; k < buf.size(); ++k) {
      data[k] = std::bit_cast<float>(to_little(buf[k]));
    }
  }
  return ck;
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return read_checkpoint(path);
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed checkpoint header: " + e.what());
  } catch (const InputError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace spacebyte
