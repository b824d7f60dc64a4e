#include "relex/experiment.hpp"

#include <fstream>
#include <set>

#include "relex/config_json.hpp"
#include "relex/errors.hpp"

namespace relex::cli {

using nlohmann::json;

std::string ExperimentConfig::checkpoint_path() const {
  if (!paths.checkpoint.empty()) return paths.checkpoint;
  return paths.output_dir + "/checkpoint.bin";
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& keys, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) {
      throw ConfigError(std::string("unknown key '") + key + "' in " + where);
    }
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& into, const char* where) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + where + "." + key + "': " + e.what());
  }
}

json paths_to_json(const PathsConfig& p) {
  json j;
  j["train"] = p.train;
  j["test"] = p.test;
  j["schema"] = p.schema;
  j["embeddings"] = p.embeddings;
  j["checkpoint"] = p.checkpoint;
  j["resume_from"] = p.resume_from;
  j["output_dir"] = p.output_dir;
  return j;
}

PathsConfig paths_from_json(const json& j) {
  reject_unknown(j, {"train", "test", "schema", "embeddings", "checkpoint", "resume_from",
                     "output_dir"},
                 "paths");
  PathsConfig p;
  read_key(j, "train", p.train, "paths");
  read_key(j, "test", p.test, "paths");
  read_key(j, "schema", p.schema, "paths");
  read_key(j, "embeddings", p.embeddings, "paths");
  read_key(j, "checkpoint", p.checkpoint, "paths");
  read_key(j, "resume_from", p.resume_from, "paths");
  read_key(j, "output_dir", p.output_dir, "paths");
  return p;
}

json synth_to_json(const corpus::SynthSpec& s) {
  json j;
  j["num_relations"] = s.num_relations;
  j["vocab_size"] = s.vocab_size;
  j["min_sentences_per_bag"] = s.min_sentences_per_bag;
  j["max_sentences_per_bag"] = s.max_sentences_per_bag;
  j["bags_per_relation"] = s.bags_per_relation;
  j["noisy_sentence_rate"] = s.noisy_sentence_rate;
  j["noisy_bag_rate"] = s.noisy_bag_rate;
  j["seed"] = s.seed;
  j["test_bags_per_relation"] = s.test_bags_per_relation;
  j["na_bags"] = s.na_bags;
  j["na_test_bags"] = s.na_test_bags;
  j["min_sentence_len"] = s.min_sentence_len;
  j["max_sentence_len"] = s.max_sentence_len;
  j["entity_token_pool"] = s.entity_token_pool;
  return j;
}

corpus::SynthSpec synth_from_json(const json& j) {
  reject_unknown(j,
                 {"num_relations", "vocab_size", "min_sentences_per_bag",
                  "max_sentences_per_bag", "bags_per_relation", "noisy_sentence_rate",
                  "noisy_bag_rate", "seed", "test_bags_per_relation", "na_bags",
                  "na_test_bags", "min_sentence_len", "max_sentence_len",
                  "entity_token_pool"},
                 "synthetic");
  corpus::SynthSpec s;
  read_key(j, "num_relations", s.num_relations, "synthetic");
  read_key(j, "vocab_size", s.vocab_size, "synthetic");
  read_key(j, "min_sentences_per_bag", s.min_sentences_per_bag, "synthetic");
  read_key(j, "max_sentences_per_bag", s.max_sentences_per_bag, "synthetic");
  read_key(j, "bags_per_relation", s.bags_per_relation, "synthetic");
  read_key(j, "noisy_sentence_rate", s.noisy_sentence_rate, "synthetic");
  read_key(j, "noisy_bag_rate", s.noisy_bag_rate, "synthetic");
  read_key(j, "seed", s.seed, "synthetic");
  read_key(j, "test_bags_per_relation", s.test_bags_per_relation, "synthetic");
  read_key(j, "na_bags", s.na_bags, "synthetic");
  read_key(j, "na_test_bags", s.na_test_bags, "synthetic");
  read_key(j, "min_sentence_len", s.min_sentence_len, "synthetic");
  read_key(j, "max_sentence_len", s.max_sentence_len, "synthetic");
  read_key(j, "entity_token_pool", s.entity_token_pool, "synthetic");
  return s;
}

json eval_to_json(const EvalOptions& e) {
  json j;
  j["top_k"] = e.top_k;
  j["p_at_n"] = e.p_at_n;
  j["subsample"] = eval::to_string(e.subsample);
  j["subsample_seed"] = e.subsample_seed;
  j["cases"] = e.cases;
  return j;
}

EvalOptions eval_from_json(const json& j) {
  reject_unknown(j, {"top_k", "p_at_n", "subsample", "subsample_seed", "cases"}, "eval");
  EvalOptions e;
  read_key(j, "top_k", e.top_k, "eval");
  read_key(j, "p_at_n", e.p_at_n, "eval");
  std::string mode = eval::to_string(e.subsample);
  read_key(j, "subsample", mode, "eval");
  e.subsample = eval::subsample_mode_from(mode);
  read_key(j, "subsample_seed", e.subsample_seed, "eval");
  read_key(j, "cases", e.cases, "eval");
  return e;
}

json grid_to_json(const GridSpec& g) {
  json j;
  j["n"] = g.n;
  j["batch_pretrain"] = g.batch_pretrain;
  j["batch_train"] = g.batch_train;
  return j;
}

GridSpec grid_from_json(const json& j) {
  reject_unknown(j, {"n", "batch_pretrain", "batch_train"}, "grid");
  GridSpec g;
  read_key(j, "n", g.n, "grid");
  read_key(j, "batch_pretrain", g.batch_pretrain, "grid");
  read_key(j, "batch_train", g.batch_train, "grid");
  return g;
}

}  // namespace

json experiment_to_json(const ExperimentConfig& config) {
  json j;
  j["model"] = model::model_config_to_json(config.model);
  j["paths"] = paths_to_json(config.paths);
  j["synthetic"] = synth_to_json(config.synthetic);
  j["eval"] = eval_to_json(config.eval);
  j["grid"] = grid_to_json(config.grid);
  return j;
}

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown(j, {"model", "paths", "synthetic", "eval", "grid"}, "config");
  ExperimentConfig config;
  if (j.contains("model")) config.model = model::model_config_from_json(j.at("model"));
  if (j.contains("paths")) config.paths = paths_from_json(j.at("paths"));
  if (j.contains("synthetic")) config.synthetic = synth_from_json(j.at("synthetic"));
  if (j.contains("eval")) config.eval = eval_from_json(j.at("eval"));
  if (j.contains("grid")) config.grid = grid_from_json(j.at("grid"));
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  return experiment_from_json(j);
}

void apply_override(json& doc, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value, got '" + assignment + "'");
  }
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }
  json* at = &doc;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) throw ConfigError("bad override key '" + key + "'");
    if (dot == std::string::npos) {
      (*at)[part] = parsed;
      break;
    }
    at = &(*at)[part];
    start = dot + 1;
  }
}

}  // namespace relex::cli
