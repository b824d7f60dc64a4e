#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relex/commands.hpp"
#include "relex/errors.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string checkpoint;
  long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "experiment config JSON file");
  cmd->add_option("--set", args.overrides,
                  "override a config key, e.g. --set model.seed=7 (repeatable; flags win "
                  "over file values)");
  cmd->add_option("-o,--output-dir", args.output_dir, "run output directory");
  cmd->add_option("--checkpoint", args.checkpoint, "checkpoint file path");
  cmd->add_option("--seed", args.seed, "model seed (shorthand for --set model.seed=...)");
}

relex::cli::ExperimentConfig build_config(const CommonArgs& args) {
  nlohmann::json doc = nlohmann::json::object();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw relex::IoError("cannot open config file: " + args.config_path);
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw relex::ConfigError("config file " + args.config_path + ": " + e.what());
    }
  }
  // Precedence: direct flags > --set overrides > config file > defaults.
  for (const auto& assignment : args.overrides) {
    relex::cli::apply_override(doc, assignment);
  }
  if (!args.output_dir.empty()) relex::cli::apply_override(doc, "paths.output_dir=" + args.output_dir);
  if (!args.checkpoint.empty()) relex::cli::apply_override(doc, "paths.checkpoint=" + args.checkpoint);
  if (args.seed >= 0) relex::cli::apply_override(doc, "model.seed=" + std::to_string(args.seed));
  return relex::cli::experiment_from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distant-supervision relation extraction with intra/inter-bag attention"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, analyze_args, grid_args;
  CLI::App* gen = app.add_subcommand("gen-synthetic", "generate a synthetic noisy corpus");
  add_common(gen, gen_args);
  CLI::App* train = app.add_subcommand("train", "train a model (two-stage schedule)");
  add_common(train, train_args);
  CLI::App* eval = app.add_subcommand("eval", "held-out evaluation: PR curve, AUC, P@N");
  add_common(eval, eval_args);
  CLI::App* analyze =
      app.add_subcommand("analyze", "inter-bag weight distribution and case studies");
  add_common(analyze, analyze_args);
  CLI::App* grid = app.add_subcommand("grid", "grid search over n, N_p, N_t");
  add_common(grid, grid_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return relex::cli::cmd_gen_synthetic(build_config(gen_args));
    if (train->parsed()) return relex::cli::cmd_train(build_config(train_args));
    if (eval->parsed()) return relex::cli::cmd_eval(build_config(eval_args));
    if (analyze->parsed()) return relex::cli::cmd_analyze(build_config(analyze_args));
    if (grid->parsed()) return relex::cli::cmd_grid(build_config(grid_args));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
