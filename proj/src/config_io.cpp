#include "spacebyte/config_io.h"

#include <fstream>
#include <set>
#include <sstream>

#include "spacebyte/error.h"

namespace spacebyte {
namespace {

using nlohmann::json;

// Reads known keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) {
      throw ConfigError("config section '" + name_ + "' must be a JSON object");
    }
  }

  void get(const char* key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
        fail(key, "a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) {
        fail(key, "a number");
      }
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) {
        fail(key, "a boolean");
      }
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) {
        fail(key, "a string");
      }
      out = v->get<std::string>();
    }
  }
  const json* sub(const char* key) { return take(key); }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) {
        throw ConfigError("unknown key '" + k + "' in config section '" + name_ + "'");
      }
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError("config key '" + name_ + "." + key + "' must be " + what);
  }

  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

json parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open config file " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
}

ModelConfig read_model(const json& j) {
  ModelConfig cfg;
  Section s(j, "model");
  std::string kind(kind_name(cfg.kind));
  s.get("kind", kind);
  cfg.kind = parse_kind(kind);
  s.get("vocab_size", cfg.vocab_size);
  s.get("context", cfg.context);
  s.get("dim", cfg.dim);
  s.get("local_dim", cfg.local_dim);
  s.get("global_context", cfg.global_context);
  s.get("patch_size", cfg.patch_size);
  s.get("window", cfg.window);
  s.get("local_window", cfg.local_window);
  s.get("layers", cfg.layers);
  s.get("global_layers", cfg.global_layers);
  s.get("local_layers", cfg.local_layers);
  s.get("ff_mult", cfg.ff_mult);
  s.get("head_dim", cfg.head_dim);
  s.get("tie_embeddings", cfg.tie_embeddings);
  s.finish();
  cfg.validate();
  return cfg;
}

TrainConfig read_train(const json& j) {
  TrainConfig cfg;
  Section s(j, "train");
  s.get("batch_size", cfg.batch_size);
  s.get("lr", cfg.lr);
  s.get("beta1", cfg.beta1);
  s.get("beta2", cfg.beta2);
  s.get("weight_decay", cfg.weight_decay);
  s.get("clip_norm", cfg.clip_norm);
  s.get("eps", cfg.eps);
  s.get("warmup_fraction", cfg.warmup_fraction);
  s.get("steps", cfg.steps);
  s.get("flop_budget", cfg.flop_budget);
  s.get("eval_every", cfg.eval_every);
  std::size_t seed = cfg.seed;
  s.get("seed", seed);
  cfg.seed = seed;
  s.get("zero_deembed", cfg.zero_deembed);
  s.finish();
  if (cfg.batch_size == 0) {
    throw ConfigError("config key 'train.batch_size' must be positive");
  }
  if (cfg.steps > 0 && cfg.flop_budget > 0.0) {
    throw ConfigError("set only one of 'train.steps' and 'train.flop_budget'");
  }
  if (!(cfg.lr >= 0.0) || !(cfg.clip_norm > 0.0) || !(cfg.warmup_fraction >= 0.0)) {
    throw ConfigError("train.lr, train.clip_norm and train.warmup_fraction must be "
                      "non-negative (clip_norm positive)");
  }
  return cfg;
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"kind", std::string(kind_name(c.kind))},
              {"vocab_size", c.vocab_size},
              {"context", c.context},
              {"dim", c.dim},
              {"local_dim", c.local_dim},
              {"global_context", c.global_context},
              {"patch_size", c.patch_size},
              {"window", c.window},
              {"local_window", c.local_window},
              {"layers", c.layers},
              {"global_layers", c.global_layers},
              {"local_layers", c.local_layers},
              {"ff_mult", c.ff_mult},
              {"head_dim", c.head_dim},
              {"tie_embeddings", c.tie_embeddings}};
}

json to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"weight_decay", c.weight_decay},
              {"clip_norm", c.clip_norm},
              {"eps", c.eps},
              {"warmup_fraction", c.warmup_fraction},
              {"steps", c.steps},
              {"flop_budget", c.flop_budget},
              {"eval_every", c.eval_every},
              {"seed", c.seed},
              {"zero_deembed", c.zero_deembed}};
}

json to_json(const RunConfig& c) {
  return json{{"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"data",
               {{"path", c.data.path},
                {"eval_fraction", c.data.eval_fraction},
                {"vocab", c.data.vocab}}},
              {"eval", {{"windows", c.eval.windows}, {"batch_size", c.eval.batch_size}}}};
}

ModelConfig model_config_from_json(const json& j) { return read_model(j); }

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  Section s(j, "run");
  if (const json* m = s.sub("model")) {
    cfg.model = read_model(*m);
  }
  if (const json* t = s.sub("train")) {
    cfg.train = read_train(*t);
  }
  if (const json* d = s.sub("data")) {
    Section ds(*d, "data");
    ds.get("path", cfg.data.path);
    ds.get("eval_fraction", cfg.data.eval_fraction);
    ds.get("vocab", cfg.data.vocab);
    ds.finish();
    if (!(cfg.data.eval_fraction >= 0.0 && cfg.data.eval_fraction < 1.0)) {
      throw ConfigError("config key 'data.eval_fraction' must be in [0, 1)");
    }
  }
  if (const json* e = s.sub("eval")) {
    Section es(*e, "eval");
    es.get("windows", cfg.eval.windows);
    es.get("batch_size", cfg.eval.batch_size);
    es.finish();
    if (cfg.eval.batch_size == 0) {
      throw ConfigError("config key 'eval.batch_size' must be positive");
    }
  }
  s.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  const json j = parse_file(path);
  if (j.is_object() && !j.contains("model") && j.contains("kind")) {
    RunConfig cfg;
    cfg.model = read_model(j);
    return cfg;
  }
  return run_config_from_json(j);
}

ModelConfig load_model_config(const std::string& path) {
  const json j = parse_file(path);
  if (j.is_object() && j.contains("model")) {
    return run_config_from_json(j).model;
  }
  return read_model(j);
}

}  // namespace spacebyte
