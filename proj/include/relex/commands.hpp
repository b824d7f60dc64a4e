#pragma once

#include "relex/experiment.hpp"

namespace relex::cli {

// Subcommand bodies. Each writes its outputs under paths.output_dir,
// starting with an echo of the effective config, and returns a process exit
// code. Library errors propagate as exceptions; main() turns them into
// stderr diagnostics with a nonzero exit.
int cmd_gen_synthetic(const ExperimentConfig& config);
int cmd_train(const ExperimentConfig& config);
int cmd_eval(const ExperimentConfig& config);
int cmd_analyze(const ExperimentConfig& config);
int cmd_grid(const ExperimentConfig& config);

}  // namespace relex::cli
