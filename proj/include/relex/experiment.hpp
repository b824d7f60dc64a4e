#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "relex/eval.hpp"
#include "relex/model.hpp"
#include "relex/synth.hpp"

namespace relex::cli {

struct PathsConfig {
  std::string train;
  std::string test;
  std::string schema;
  std::string embeddings;    // optional pretrained word vectors
  std::string checkpoint;    // defaults to <output_dir>/checkpoint.bin
  std::string resume_from;   // optional checkpoint to continue training from
  std::string output_dir = "runs/default";
};

struct EvalOptions {
  long top_k = 2000;
  std::vector<long> p_at_n = {100, 200, 300};
  eval::SubsampleMode subsample = eval::SubsampleMode::kAll;
  std::uint64_t subsample_seed = 7;
  int cases = 3;  // case-study reports emitted by cmd_analyze
};

// Grid-search values; defaults mirror the documented search ranges.
struct GridSpec {
  std::vector<int> n = {3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<int> batch_pretrain = {10, 20, 50, 100, 200};
  std::vector<int> batch_train = {5, 10, 20, 50};
};

struct ExperimentConfig {
  model::ModelConfig model;
  PathsConfig paths;
  corpus::SynthSpec synthetic;
  EvalOptions eval;
  GridSpec grid;

  std::string checkpoint_path() const;
};

nlohmann::json experiment_to_json(const ExperimentConfig& config);
// Unknown keys anywhere in the document are a ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

// Applies a "dotted.key=value" override onto the raw config document before
// parsing; values parse as JSON when possible and fall back to strings.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace relex::cli
