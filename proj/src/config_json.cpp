#include "relex/config_json.hpp"

#include <set>

#include "relex/errors.hpp"

namespace relex::model {

using nlohmann::json;

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["encoder"] = to_string(cfg.encoder);
  j["intra"] = to_string(cfg.intra);
  j["inter"] = to_string(cfg.inter);
  j["d_w"] = cfg.d_w;
  j["d_p"] = cfg.d_p;
  j["d_c"] = cfg.d_c;
  j["window"] = cfg.window;
  j["max_dist"] = cfg.max_dist;
  j["h"] = cfg.h;
  j["n"] = cfg.n;
  j["dropout_rate"] = cfg.dropout_rate;
  j["lr_pretrain"] = cfg.lr_pretrain;
  j["lr_train"] = cfg.lr_train;
  j["decay_every"] = cfg.decay_every;
  j["decay_factor"] = cfg.decay_factor;
  j["clip_norm"] = cfg.clip_norm;
  j["batch_pretrain"] = cfg.batch_pretrain;
  j["batch_train"] = cfg.batch_train;
  j["seed"] = cfg.seed;
  j["eval_every"] = cfg.eval_every;
  j["patience"] = cfg.patience;
  j["max_steps_per_stage"] = cfg.max_steps_per_stage;
  j["dev_fraction"] = cfg.dev_fraction;
  j["min_count"] = cfg.min_count;
  j["dropout_after_norm"] = cfg.dropout_after_norm;
  return j;
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& into) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const std::set<std::string> kKeys = {
      "encoder",      "intra",          "inter",       "d_w",
      "d_p",          "d_c",            "window",      "max_dist",
      "h",            "n",              "dropout_rate","lr_pretrain",
      "lr_train",     "decay_every",    "decay_factor","clip_norm",
      "batch_pretrain","batch_train",   "seed",        "eval_every",
      "patience",     "max_steps_per_stage",           "dev_fraction",
      "min_count",    "dropout_after_norm",
  };
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw ConfigError("unknown model config key: '" + key + "'");
  }
  ModelConfig cfg;
  std::string s;
  s = to_string(cfg.encoder); read_key(j, "encoder", s); cfg.encoder = encoder_kind_from(s);
  s = to_string(cfg.intra);   read_key(j, "intra", s);   cfg.intra = intra_kind_from(s);
  s = to_string(cfg.inter);   read_key(j, "inter", s);   cfg.inter = inter_kind_from(s);
  read_key(j, "d_w", cfg.d_w);
  read_key(j, "d_p", cfg.d_p);
  read_key(j, "d_c", cfg.d_c);
  read_key(j, "window", cfg.window);
  read_key(j, "max_dist", cfg.max_dist);
  read_key(j, "h", cfg.h);
  read_key(j, "n", cfg.n);
  read_key(j, "dropout_rate", cfg.dropout_rate);
  read_key(j, "lr_pretrain", cfg.lr_pretrain);
  read_key(j, "lr_train", cfg.lr_train);
  read_key(j, "decay_every", cfg.decay_every);
  read_key(j, "decay_factor", cfg.decay_factor);
  read_key(j, "clip_norm", cfg.clip_norm);
  read_key(j, "batch_pretrain", cfg.batch_pretrain);
  read_key(j, "batch_train", cfg.batch_train);
  read_key(j, "seed", cfg.seed);
  read_key(j, "eval_every", cfg.eval_every);
  read_key(j, "patience", cfg.patience);
  read_key(j, "max_steps_per_stage", cfg.max_steps_per_stage);
  read_key(j, "dev_fraction", cfg.dev_fraction);
  read_key(j, "min_count", cfg.min_count);
  read_key(j, "dropout_after_norm", cfg.dropout_after_norm);
  return cfg;
}

}  // namespace relex::model
