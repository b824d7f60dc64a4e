#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "relex/checkpoint.hpp"
#include "relex/commands.hpp"
#include "relex/errors.hpp"
#include "relex/eval.hpp"

using namespace relex;
using namespace relex::cli;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "relex_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Small but learnable setup shared by the command tests.
ExperimentConfig tiny_experiment(const fs::path& corpus_dir, const fs::path& run_dir) {
  ExperimentConfig config;
  config.synthetic.num_relations = 2;
  config.synthetic.vocab_size = 20;
  config.synthetic.bags_per_relation = 12;
  config.synthetic.na_bags = 6;
  config.synthetic.noisy_sentence_rate = 0.2;
  config.synthetic.noisy_bag_rate = 0.2;
  config.synthetic.seed = 71;
  config.synthetic.test_bags_per_relation = 6;

  config.model.d_w = 6;
  config.model.d_p = 2;
  config.model.d_c = 4;
  config.model.max_dist = 5;
  config.model.n = 3;
  config.model.min_count = 0;
  config.model.dev_fraction = 0.2;
  config.model.eval_every = 4;
  config.model.patience = 2;
  config.model.max_steps_per_stage = 16;
  config.model.batch_pretrain = 10;
  config.model.batch_train = 5;
  config.model.seed = 3;

  config.paths.train = (corpus_dir / "train.jsonl").string();
  config.paths.test = (corpus_dir / "test.jsonl").string();
  config.paths.schema = (corpus_dir / "schema.json").string();
  config.paths.output_dir = run_dir.string();
  config.eval.p_at_n = {5, 10};
  config.eval.top_k = 50;
  return config;
}

void generate_corpus(const ExperimentConfig& base, const fs::path& corpus_dir) {
  ExperimentConfig gen = base;
  gen.paths.output_dir = corpus_dir.string();
  REQUIRE(cmd_gen_synthetic(gen) == 0);
}

}  // namespace

TEST_CASE("experiment config round trip and unknown keys") {
  ExperimentConfig config;
  json j = experiment_to_json(config);
  CHECK(j.at("model").at("d_w") == 50);          // defaults echo the reference table
  CHECK(j.at("model").at("batch_pretrain") == 50);
  CHECK(j.at("eval").at("top_k") == 2000);
  CHECK(j.at("grid").at("n").size() == 8);

  ExperimentConfig back = experiment_from_json(j);
  CHECK(experiment_to_json(back) == j);

  json bad = j;
  bad["extra_section"] = 1;
  CHECK_THROWS_AS(experiment_from_json(bad), ConfigError);
  json bad2 = j;
  bad2["paths"]["nope"] = "x";
  CHECK_THROWS_AS(experiment_from_json(bad2), ConfigError);
  json bad3 = j;
  bad3["eval"]["subsample"] = "half";
  CHECK_THROWS_AS(experiment_from_json(bad3), ConfigError);
}

TEST_CASE("config overrides") {
  json doc = json::object();
  apply_override(doc, "model.seed=41");
  apply_override(doc, "paths.output_dir=/tmp/xyz");
  apply_override(doc, "eval.p_at_n=[10,20]");
  ExperimentConfig config = experiment_from_json(doc);
  CHECK(config.model.seed == 41);
  CHECK(config.paths.output_dir == "/tmp/xyz");
  CHECK(config.eval.p_at_n == std::vector<long>{10, 20});
  CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), ConfigError);
}

TEST_CASE("gen-synthetic writes deterministic corpora") {
  fs::path dir1 = fresh_dir("gen1");
  fs::path dir2 = fresh_dir("gen2");
  ExperimentConfig config = tiny_experiment(dir1, dir1);

  ExperimentConfig c1 = config;
  c1.paths.output_dir = dir1.string();
  REQUIRE(cmd_gen_synthetic(c1) == 0);
  ExperimentConfig c2 = config;
  c2.paths.output_dir = dir2.string();
  REQUIRE(cmd_gen_synthetic(c2) == 0);

  for (const char* name : {"train.jsonl", "test.jsonl", "schema.json", "noise.json"}) {
    CHECK(slurp(dir1 / name) == slurp(dir2 / name));
  }
  // The echo lands in the output dir.
  CHECK(fs::exists(dir1 / "config.json"));
}

TEST_CASE("train twice with one seed is byte-identical") {
  fs::path corpus = fresh_dir("train_corpus");
  fs::path run1 = fresh_dir("train_run1");
  fs::path run2 = fresh_dir("train_run2");
  ExperimentConfig config = tiny_experiment(corpus, run1);
  generate_corpus(config, corpus);

  ExperimentConfig a = config;
  a.paths.output_dir = run1.string();
  REQUIRE(cmd_train(a) == 0);
  ExperimentConfig b = config;
  b.paths.output_dir = run2.string();
  REQUIRE(cmd_train(b) == 0);

  CHECK(slurp(run1 / "checkpoint.bin") == slurp(run2 / "checkpoint.bin"));
  CHECK(slurp(run1 / "train.log") == slurp(run2 / "train.log"));

  // Two-stage log with the default inter=bag_att.
  std::string log = slurp(run1 / "train.log");
  CHECK(log.find("stage=pretrain begin") != std::string::npos);
  CHECK(log.find("stage=main begin") != std::string::npos);
}

TEST_CASE("train with inter=none logs a single stage") {
  fs::path corpus = fresh_dir("none_corpus");
  fs::path run = fresh_dir("none_run");
  ExperimentConfig config = tiny_experiment(corpus, run);
  generate_corpus(config, corpus);
  config.model.inter = model::InterKind::kNone;
  REQUIRE(cmd_train(config) == 0);
  std::string log = slurp(run / "train.log");
  CHECK(log.find("stage=pretrain begin") != std::string::npos);
  CHECK(log.find("stage=main") == std::string::npos);
}

TEST_CASE("resume continues at the recorded step") {
  fs::path corpus = fresh_dir("resume_corpus");
  fs::path run = fresh_dir("resume_run");
  fs::path resumed = fresh_dir("resume_run2");
  ExperimentConfig config = tiny_experiment(corpus, run);
  generate_corpus(config, corpus);
  REQUIRE(cmd_train(config) == 0);

  auto ckpt = model::load_checkpoint((run / "checkpoint.bin").string());
  long recorded = ckpt.state.step;

  ExperimentConfig next = config;
  next.paths.resume_from = (run / "checkpoint.bin").string();
  next.paths.output_dir = resumed.string();
  REQUIRE(cmd_train(next) == 0);
  std::string log = slurp(resumed / "train.log");
  CHECK(log.find("resume step=" + std::to_string(recorded)) != std::string::npos);
  auto ckpt2 = model::load_checkpoint((resumed / "checkpoint.bin").string());
  CHECK(ckpt2.state.step >= recorded);
}

TEST_CASE("eval emits metrics, csv exports and round-trips auc") {
  fs::path corpus = fresh_dir("eval_corpus");
  fs::path run = fresh_dir("eval_run");
  ExperimentConfig config = tiny_experiment(corpus, run);
  generate_corpus(config, corpus);
  REQUIRE(cmd_train(config) == 0);
  REQUIRE(cmd_eval(config) == 0);

  json metrics;
  {
    std::ifstream in(run / "metrics.json");
    in >> metrics;
  }
  CHECK(metrics.contains("auc"));
  CHECK(metrics.contains("auc_top_k"));
  CHECK(metrics.at("top_k") == 50);
  CHECK(metrics.at("p_at_n").at("values").contains("5"));
  CHECK(metrics.at("p_at_n").at("values").contains("10"));
  CHECK(metrics.at("p_at_n").at("mode") == "all");

  // Re-importing the exported curve reproduces the reported AUC exactly.
  eval::PrCurve curve = eval::read_pr_csv((run / "pr_curve.csv").string());
  CHECK(eval::auc(curve) == metrics.at("auc").get<double>());
  CHECK(eval::auc(curve, 50) == metrics.at("auc_top_k").get<double>());

  CHECK(fs::exists(run / "ranking.csv"));

  // Missing checkpoint is a hard error.
  ExperimentConfig missing = config;
  missing.paths.checkpoint = (run / "nope.bin").string();
  CHECK_THROWS_AS(cmd_eval(missing), IoError);
}

TEST_CASE("analyze writes the bucket table and case reports") {
  fs::path corpus = fresh_dir("analyze_corpus");
  fs::path run = fresh_dir("analyze_run");
  ExperimentConfig config = tiny_experiment(corpus, run);
  generate_corpus(config, corpus);
  REQUIRE(cmd_train(config) == 0);
  REQUIRE(cmd_analyze(config) == 0);

  std::string table = slurp(run / "weight_distribution.csv");
  CHECK(table.find("sentence_count,count,mean,std") == 0);
  CHECK(fs::exists(run / "case_000.json"));
  json report = json::parse(slurp(run / "case_000.json"));
  CHECK(report.contains("relation"));
  CHECK(report.at("bags").size() >= 2);

  // A checkpoint without the inter-bag stage is rejected.
  fs::path run_none = fresh_dir("analyze_none");
  ExperimentConfig none = tiny_experiment(corpus, run_none);
  none.model.inter = model::InterKind::kNone;
  REQUIRE(cmd_train(none) == 0);
  CHECK_THROWS_AS(cmd_analyze(none), ConfigError);
}

TEST_CASE("grid: single cell matches train and validates ranges") {
  fs::path corpus = fresh_dir("grid_corpus");
  fs::path train_run = fresh_dir("grid_train");
  fs::path grid_run = fresh_dir("grid_grid");
  ExperimentConfig config = tiny_experiment(corpus, train_run);
  generate_corpus(config, corpus);

  // One cell that mirrors the train config exactly.
  config.grid.n = {3};
  config.grid.batch_pretrain = {10};
  config.grid.batch_train = {5};
  REQUIRE(cmd_train(config) == 0);
  auto ckpt = model::load_checkpoint((train_run / "checkpoint.bin").string());

  ExperimentConfig grid_config = config;
  grid_config.paths.output_dir = grid_run.string();
  REQUIRE(cmd_grid(grid_config) == 0);
  std::string results = slurp(grid_run / "grid_results.csv");
  CHECK(results.find("n,batch_pretrain,batch_train,dev_auc") == 0);
  char expected[96];
  std::snprintf(expected, sizeof(expected), "3,10,5,%.17g", ckpt.state.best_dev_metric);
  CHECK(results.find(expected) != std::string::npos);

  // Out-of-range grid values are rejected.
  ExperimentConfig bad = grid_config;
  bad.grid.n = {2};
  CHECK_THROWS_AS(cmd_grid(bad), ConfigError);
  ExperimentConfig bad2 = grid_config;
  bad2.grid.batch_pretrain = {15};
  CHECK_THROWS_AS(cmd_grid(bad2), ConfigError);
}

TEST_CASE("config echo reproduces the run byte for byte") {
  fs::path corpus = fresh_dir("echo_corpus");
  fs::path run = fresh_dir("echo_run");
  fs::path rerun = fresh_dir("echo_rerun");
  ExperimentConfig config = tiny_experiment(corpus, run);
  generate_corpus(config, corpus);
  REQUIRE(cmd_train(config) == 0);

  // Re-load the echoed config, point it at a new output dir, run again.
  json echoed;
  {
    std::ifstream in(run / "config.json");
    in >> echoed;
  }
  ExperimentConfig again = experiment_from_json(echoed);
  again.paths.output_dir = rerun.string();
  REQUIRE(cmd_train(again) == 0);
  CHECK(slurp(run / "checkpoint.bin") == slurp(rerun / "checkpoint.bin"));
  CHECK(slurp(run / "train.log") == slurp(rerun / "train.log"));
}
