#include "relex/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "relex/checkpoint.hpp"
#include "relex/errors.hpp"

namespace relex::cli {

namespace fs = std::filesystem;
using corpus::Bag;
using corpus::BagGroup;
using corpus::RelationSchema;
using corpus::SentenceRecord;
using corpus::Vocabulary;
using model::Checkpoint;
using model::TrainState;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDevSplitSalt = 0xDE7'5EEDULL;
constexpr std::uint64_t kGroupPackSalt = 0x9AC5'10A9ULL;

void ensure_output_dir(const ExperimentConfig& config) {
  std::error_code ec;
  fs::create_directories(config.paths.output_dir, ec);
  if (ec) throw IoError("cannot create output dir: " + config.paths.output_dir);
}

void echo_config(const ExperimentConfig& config) {
  std::string path = config.paths.output_dir + "/config.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config echo: " + path);
  out << experiment_to_json(config).dump(2) << "\n";
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// 5% of training bags held out per relation for the convergence rule.
void split_dev(const std::vector<Bag>& bags, double fraction, std::uint64_t seed,
               std::vector<Bag>& train_out, std::vector<Bag>& dev_out) {
  std::map<int, std::vector<int>> by_relation;
  for (int i = 0; i < static_cast<int>(bags.size()); ++i) {
    by_relation[bags[i].relation_id].push_back(i);
  }
  std::vector<bool> is_dev(bags.size(), false);
  Rng rng(seed);
  for (auto& [relation, members] : by_relation) {
    rng.shuffle(members);
    auto take = static_cast<std::size_t>(fraction * static_cast<double>(members.size()));
    for (std::size_t i = 0; i < take; ++i) is_dev[members[i]] = true;
  }
  for (std::size_t i = 0; i < bags.size(); ++i) {
    (is_dev[i] ? dev_out : train_out).push_back(bags[i]);
  }
}

struct TrainRun {
  TrainState state;
  Vocabulary vocab;
  RelationSchema schema;
  std::vector<std::string> log_lines;
};

// Shared by cmd_train and cmd_grid: corpus -> vocab -> dev split -> groups
// -> two-stage training.
TrainRun run_training(const ExperimentConfig& config, const model::ModelConfig& model_cfg) {
  TrainRun run;
  const std::optional<Checkpoint> resume =
      config.paths.resume_from.empty()
          ? std::nullopt
          : std::optional<Checkpoint>(model::load_checkpoint(config.paths.resume_from));

  run.schema = resume ? resume->schema : RelationSchema::load(config.paths.schema);
  std::vector<SentenceRecord> records = corpus::load_corpus(config.paths.train, run.schema);
  if (records.empty()) throw ContractError("training corpus is empty");

  model::ModelConfig cfg = model_cfg;
  cfg.h = run.schema.size();
  cfg.validate();

  if (resume) {
    run.vocab = resume->vocab;
  } else {
    run.vocab = corpus::build_vocab(records, cfg.min_count);
  }

  std::vector<Bag> bags = corpus::pack_bags(records, run.schema);
  std::vector<Bag> train_bags, dev_bags;
  split_dev(bags, cfg.dev_fraction, cfg.seed ^ kDevSplitSalt, train_bags, dev_bags);

  eval::Annotations dev_ann;
  for (const Bag& bag : dev_bags) {
    if (bag.relation_id != run.schema.na_index()) {
      dev_ann[{bag.head_id, bag.tail_id}].insert(bag.relation_id);
    }
  }
  model::MetricFn dev_metric;
  if (!dev_ann.empty()) {
    dev_metric = eval::make_dev_auc_metric(dev_bags, std::move(dev_ann), run.vocab,
                                           run.schema.na_index());
  }

  std::vector<BagGroup> groups =
      corpus::pack_groups(train_bags, cfg.n, cfg.seed ^ kGroupPackSalt, run.schema.na_index());

  model::Logger logger = [&run](const std::string& line) { run.log_lines.push_back(line); };

  if (!config.paths.embeddings.empty() && !resume) {
    // Pretrained vectors overwrite the random init for covered words.
    TrainState state = model::make_initial_state(cfg, run.vocab.size());
    int filled = encoder::load_pretrained_embeddings(config.paths.embeddings, run.vocab,
                                                     state.params.tables.word_table);
    run.log_lines.push_back("pretrained_embeddings loaded=" + std::to_string(filled));
    run.state = model::train_from_state(std::move(state), groups, run.vocab, dev_metric, logger);
  } else {
    run.state = model::train_model(groups, run.vocab, cfg, dev_metric, logger,
                                   resume ? &resume->state : nullptr);
  }
  return run;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& line : lines) out << line << "\n";
}

}  // namespace

int cmd_gen_synthetic(const ExperimentConfig& config) {
  ensure_output_dir(config);
  echo_config(config);
  corpus::SynthCorpus synth = corpus::gen_synthetic(config.synthetic);
  const std::string& dir = config.paths.output_dir;
  corpus::save_corpus(dir + "/train.jsonl", synth.train);
  corpus::save_corpus(dir + "/test.jsonl", synth.test);
  synth.schema.save(dir + "/schema.json");
  corpus::save_annotations(dir + "/noise.json", synth.annotations);
  long noisy_bags = 0;
  for (const auto& a : synth.annotations) noisy_bags += a.noisy_bag ? 1 : 0;
  std::printf("gen-synthetic: %zu train sentences, %zu test sentences, %zu bags (%ld noisy)\n",
              synth.train.size(), synth.test.size(), synth.annotations.size(), noisy_bags);
  return 0;
}

int cmd_train(const ExperimentConfig& config) {
  ensure_output_dir(config);
  echo_config(config);
  TrainRun run = run_training(config, config.model);
  write_lines(config.paths.output_dir + "/train.log", run.log_lines);
  model::save_checkpoint(Checkpoint{run.state, run.vocab, run.schema},
                         config.checkpoint_path());
  std::printf("train: saved %s (step=%ld best_dev_auc=%s)\n",
              config.checkpoint_path().c_str(), run.state.step,
              fmt_double(run.state.best_dev_metric).c_str());
  return 0;
}

int cmd_eval(const ExperimentConfig& config) {
  ensure_output_dir(config);
  echo_config(config);
  Checkpoint ckpt = model::load_checkpoint(config.checkpoint_path());
  std::vector<SentenceRecord> records = corpus::load_corpus(config.paths.test, ckpt.schema);
  std::vector<Bag> bags = corpus::pack_bags_by_pair(records);
  eval::Annotations annotations = eval::annotations_from_records(records, ckpt.schema);

  eval::EvalRanking ranking =
      eval::decode_testset(bags, ckpt.state, ckpt.vocab, annotations, ckpt.schema.na_index());
  eval::PrCurve curve = eval::pr_curve(ranking);
  double auc_full = eval::auc(curve);
  double auc_top_k = eval::auc(curve, config.eval.top_k);
  eval::write_pr_csv(config.paths.output_dir + "/pr_curve.csv", curve);
  eval::write_ranking_csv(config.paths.output_dir + "/ranking.csv", ranking, ckpt.schema);

  // P@N protocol: pairs with more than one sentence, subsampled to one, two
  // or all sentences per bag.
  std::vector<Bag> sub =
      eval::subsample_bags(bags, config.eval.subsample, config.eval.subsample_seed);
  json p_at_n_values = json::object();
  if (!sub.empty()) {
    eval::EvalRanking sub_ranking =
        eval::decode_testset(sub, ckpt.state, ckpt.vocab, annotations, ckpt.schema.na_index());
    for (long n : config.eval.p_at_n) {
      std::string key = std::to_string(n);
      if (n >= 1 && n <= static_cast<long>(sub_ranking.entries.size())) {
        p_at_n_values[key] = eval::p_at_n(sub_ranking, n);
      } else {
        std::fprintf(stderr, "warning: P@%ld skipped (ranking has %zu entries)\n", n,
                     sub_ranking.entries.size());
        p_at_n_values[key] = nullptr;
      }
    }
  } else {
    for (long n : config.eval.p_at_n) p_at_n_values[std::to_string(n)] = nullptr;
  }

  json metrics;
  metrics["auc"] = auc_full;
  metrics["auc_top_k"] = auc_top_k;
  metrics["top_k"] = config.eval.top_k;
  metrics["total_positives"] = ranking.total_positives;
  metrics["ranked_entries"] = ranking.entries.size();
  metrics["p_at_n"] = {{"mode", eval::to_string(config.eval.subsample)},
                       {"seed", config.eval.subsample_seed},
                       {"values", p_at_n_values}};
  std::string metrics_path = config.paths.output_dir + "/metrics.json";
  std::ofstream out(metrics_path);
  if (!out) throw IoError("cannot write " + metrics_path);
  out << metrics.dump(2) << "\n";
  std::printf("eval: auc=%s auc_top_%ld=%s\n", fmt_double(auc_full).c_str(), config.eval.top_k,
              fmt_double(auc_top_k).c_str());
  return 0;
}

int cmd_analyze(const ExperimentConfig& config) {
  ensure_output_dir(config);
  echo_config(config);
  Checkpoint ckpt = model::load_checkpoint(config.checkpoint_path());
  if (ckpt.state.config.inter != model::InterKind::kBagAttention) {
    throw ConfigError("analyze requires a checkpoint trained with inter=bag_att");
  }
  std::vector<SentenceRecord> records = corpus::load_corpus(config.paths.train, ckpt.schema);
  std::vector<Bag> bags = corpus::pack_bags(records, ckpt.schema);
  std::vector<BagGroup> groups =
      corpus::pack_groups(bags, ckpt.state.config.n,
                          ckpt.state.config.seed ^ kGroupPackSalt, ckpt.schema.na_index());

  std::vector<eval::WeightBucket> table =
      eval::weight_distribution(groups, ckpt.state, ckpt.vocab);
  std::string table_path = config.paths.output_dir + "/weight_distribution.csv";
  {
    std::ofstream out(table_path);
    if (!out) throw IoError("cannot write " + table_path);
    out << "sentence_count,count,mean,std\n";
    for (const auto& bucket : table) {
      out << bucket.label << "," << bucket.count << "," << fmt_double(bucket.mean) << ","
          << fmt_double(bucket.stddev) << "\n";
    }
  }

  int written = 0;
  for (const BagGroup& group : groups) {
    if (written >= config.eval.cases) break;
    if (group.bags.size() < 2) continue;  // singleton groups carry no signal
    json report = eval::dump_case(group, ckpt.state, ckpt.vocab, ckpt.schema);
    char name[32];
    std::snprintf(name, sizeof(name), "/case_%03d.json", written);
    std::ofstream out(config.paths.output_dir + name);
    if (!out) throw IoError("cannot write case report");
    out << report.dump(2) << "\n";
    ++written;
  }
  std::printf("analyze: wrote %s and %d case reports\n", table_path.c_str(), written);
  return 0;
}

int cmd_grid(const ExperimentConfig& config) {
  ensure_output_dir(config);
  echo_config(config);
  // Documented search ranges.
  static const std::vector<int> kNRange = {3, 4, 5, 6, 7, 8, 9, 10};
  static const std::vector<int> kNpRange = {10, 20, 50, 100, 200};
  static const std::vector<int> kNtRange = {5, 10, 20, 50};
  auto check_member = [](const std::vector<int>& values, const std::vector<int>& range,
                         const char* what) {
    for (int v : values) {
      if (std::find(range.begin(), range.end(), v) == range.end()) {
        throw ConfigError(std::string("grid value for ") + what + " outside documented range: " +
                          std::to_string(v));
      }
    }
    if (values.empty()) throw ConfigError(std::string("empty grid for ") + what);
  };
  check_member(config.grid.n, kNRange, "n");
  check_member(config.grid.batch_pretrain, kNpRange, "batch_pretrain");
  check_member(config.grid.batch_train, kNtRange, "batch_train");

  struct Cell {
    int n, np, nt;
    double dev_auc;
  };
  std::vector<Cell> cells;
  for (int n : config.grid.n) {
    for (int np : config.grid.batch_pretrain) {
      for (int nt : config.grid.batch_train) {
        model::ModelConfig cfg = config.model;
        cfg.n = n;
        cfg.batch_pretrain = np;
        cfg.batch_train = nt;
        TrainRun run = run_training(config, cfg);
        if (run.state.best_dev_metric < 0.0) {
          throw ContractError("grid search requires a non-empty dev split with positives");
        }
        cells.push_back({n, np, nt, run.state.best_dev_metric});
        std::printf("grid: n=%d N_p=%d N_t=%d dev_auc=%s\n", n, np, nt,
                    fmt_double(run.state.best_dev_metric).c_str());
      }
    }
  }
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    if (a.dev_auc != b.dev_auc) return a.dev_auc > b.dev_auc;
    if (a.n != b.n) return a.n < b.n;
    if (a.np != b.np) return a.np < b.np;
    return a.nt < b.nt;
  });
  std::string path = config.paths.output_dir + "/grid_results.csv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "n,batch_pretrain,batch_train,dev_auc\n";
  for (const Cell& c : cells) {
    out << c.n << "," << c.np << "," << c.nt << "," << fmt_double(c.dev_auc) << "\n";
  }
  std::printf("grid: wrote %s (%zu cells)\n", path.c_str(), cells.size());
  return 0;
}

}  // namespace relex::cli
