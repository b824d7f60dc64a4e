#include "relex/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "relex/errors.hpp"
#include "relex/rng.hpp"

namespace relex::eval {

using model::GroupDiagnostics;
using model::Mode;

Annotations annotations_from_records(const std::vector<SentenceRecord>& records,
                                     const RelationSchema& schema) {
  Annotations ann;
  for (const auto& rec : records) {
    int rel = schema.id_of(rec.relation);
    if (rel < 0) throw SchemaError("unknown relation '" + rec.relation + "'");
    if (rel == schema.na_index()) continue;
    ann[{rec.head_id, rec.tail_id}].insert(rel);
  }
  return ann;
}

EvalRanking decode_testset(const std::vector<Bag>& bags, const TrainState& state,
                           const corpus::Vocabulary& vocab, const Annotations& annotations,
                           int na_index) {
  const model::ModelConfig& cfg = state.config;
  if (na_index < 0 || na_index >= cfg.h) throw ContractError("decode_testset: bad NA index");
  EvalRanking ranking;
  long positives = 0;
  for (const auto& [pair, rels] : annotations) positives += static_cast<long>(rels.size());
  ranking.total_positives = positives;

  for (const Bag& bag : bags) {
    BagGroup single;
    single.bags.push_back(bag);
    single.relation_id = bag.relation_id;
    GroupDiagnostics diag = model::forward_group(single, state.params, vocab, cfg, Mode::kEval);
    auto it = annotations.find({bag.head_id, bag.tail_id});
    for (int k = 0; k < cfg.h; ++k) {
      if (k == na_index) continue;
      RankingEntry e;
      e.bag_id = bag_id_of(bag);
      e.relation = k;
      e.score = diag.probs(0, k);
      e.correct = it != annotations.end() && it->second.count(k) > 0;
      ranking.entries.push_back(std::move(e));
    }
  }
  std::sort(ranking.entries.begin(), ranking.entries.end(),
            [](const RankingEntry& a, const RankingEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.bag_id != b.bag_id) return a.bag_id < b.bag_id;
              return a.relation < b.relation;
            });
  for (const auto& e : ranking.entries) {
    if (!std::isfinite(e.score)) throw ContractError("decode produced a non-finite score");
  }
  return ranking;
}

PrCurve pr_curve(const EvalRanking& ranking) {
  if (ranking.total_positives < 1) {
    throw ContractError("pr_curve requires at least one annotated positive");
  }
  PrCurve curve;
  curve.total_positives = ranking.total_positives;
  curve.points.reserve(ranking.entries.size());
  long correct = 0;
  for (std::size_t t = 0; t < ranking.entries.size(); ++t) {
    if (ranking.entries[t].correct) ++correct;
    PrPoint p;
    p.precision = static_cast<double>(correct) / static_cast<double>(t + 1);
    p.recall = static_cast<double>(correct) / static_cast<double>(ranking.total_positives);
    curve.points.push_back(p);
  }
  return curve;
}

double auc(const PrCurve& curve, long top_k) {
  std::size_t limit = curve.points.size();
  if (top_k > 0) limit = std::min<std::size_t>(limit, static_cast<std::size_t>(top_k));
  if (limit == 0) return 0.0;
  double area = 0.0;
  double prev_recall = 0.0;
  double prev_precision = curve.points[0].precision;
  for (std::size_t t = 0; t < limit; ++t) {
    const PrPoint& p = curve.points[t];
    area += (p.recall - prev_recall) * (p.precision + prev_precision) / 2.0;
    prev_recall = p.recall;
    prev_precision = p.precision;
  }
  return area;
}

double p_at_n(const EvalRanking& ranking, long n) {
  if (n < 1 || n > static_cast<long>(ranking.entries.size())) {
    throw ContractError("p_at_n: N exceeds ranking length");
  }
  long correct = 0;
  for (long t = 0; t < n; ++t) {
    if (ranking.entries[t].correct) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

SubsampleMode subsample_mode_from(const std::string& s) {
  if (s == "one") return SubsampleMode::kOne;
  if (s == "two") return SubsampleMode::kTwo;
  if (s == "all") return SubsampleMode::kAll;
  throw ConfigError("unknown subsample mode: '" + s + "' (expected one|two|all)");
}

std::string to_string(SubsampleMode mode) {
  switch (mode) {
    case SubsampleMode::kOne: return "one";
    case SubsampleMode::kTwo: return "two";
    default: return "all";
  }
}

std::vector<Bag> subsample_bags(const std::vector<Bag>& bags, SubsampleMode mode,
                                std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Bag> out;
  for (const Bag& bag : bags) {
    if (bag.sentences.size() < 2) continue;  // pairs with more than one sentence
    Bag kept = bag;
    if (mode != SubsampleMode::kAll) {
      std::size_t want = mode == SubsampleMode::kOne ? 1 : 2;
      std::vector<int> order(bag.sentences.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      rng.shuffle(order);
      order.resize(want);
      std::sort(order.begin(), order.end());  // keep corpus order
      kept.sentences.clear();
      for (int i : order) kept.sentences.push_back(bag.sentences[i]);
    }
    out.push_back(std::move(kept));
  }
  return out;
}

std::vector<WeightBucket> weight_distribution(const std::vector<BagGroup>& groups,
                                              const TrainState& state,
                                              const corpus::Vocabulary& vocab) {
  if (state.config.inter != model::InterKind::kBagAttention) {
    throw ContractError("weight_distribution requires a model trained with inter=bag_att");
  }
  constexpr int kBuckets = 5;  // 1, 2, 3, 4, >=5 sentences
  std::vector<std::vector<double>> samples(kBuckets);
  for (const BagGroup& group : groups) {
    if (group.relation_id < 0) throw ContractError("weight_distribution: unlabeled group");
    GroupDiagnostics diag =
        model::forward_group(group, state.params, vocab, state.config, Mode::kEval);
    for (std::size_t i = 0; i < group.bags.size(); ++i) {
      int m = static_cast<int>(group.bags[i].sentences.size());
      int bucket = std::min(m, kBuckets) - 1;
      samples[bucket].push_back(diag.beta(static_cast<int>(i), group.relation_id));
    }
  }
  std::vector<WeightBucket> out;
  for (int b = 0; b < kBuckets; ++b) {
    WeightBucket wb;
    wb.label = b + 1 < kBuckets ? std::to_string(b + 1) : ">=" + std::to_string(kBuckets);
    wb.count = static_cast<long>(samples[b].size());
    if (wb.count > 0) {
      double sum = 0.0;
      for (double x : samples[b]) sum += x;
      wb.mean = sum / static_cast<double>(wb.count);
      double sq = 0.0;
      for (double x : samples[b]) sq += (x - wb.mean) * (x - wb.mean);
      wb.stddev = std::sqrt(sq / static_cast<double>(wb.count));
    }
    out.push_back(std::move(wb));
  }
  return out;
}

nlohmann::json dump_case(const BagGroup& group, const TrainState& state,
                         const corpus::Vocabulary& vocab, const RelationSchema& schema) {
  GroupDiagnostics diag =
      model::forward_group(group, state.params, vocab, state.config, Mode::kEval);
  int label = group.relation_id;
  if (label < 0) throw ContractError("dump_case: unlabeled group");
  nlohmann::json j;
  j["relation"] = schema.name(label);
  nlohmann::json bags = nlohmann::json::array();
  for (std::size_t i = 0; i < group.bags.size(); ++i) {
    const Bag& bag = group.bags[i];
    nlohmann::json jb;
    jb["head_id"] = bag.head_id;
    jb["tail_id"] = bag.tail_id;
    jb["beta"] = diag.beta(static_cast<int>(i), label);
    nlohmann::json sentences = nlohmann::json::array();
    for (std::size_t s = 0; s < bag.sentences.size(); ++s) {
      const SentenceRecord& rec = bag.sentences[s];
      nlohmann::json js;
      std::string text;
      for (std::size_t t = 0; t < rec.tokens.size(); ++t) {
        if (!text.empty()) text += ' ';
        if (static_cast<int>(t) == rec.head_pos) {
          text += "<e1>" + rec.tokens[t] + "</e1>";
        } else if (static_cast<int>(t) == rec.tail_pos) {
          text += "<e2>" + rec.tokens[t] + "</e2>";
        } else {
          text += rec.tokens[t];
        }
      }
      js["text"] = text;
      js["alpha"] = diag.alpha[i](label, static_cast<int>(s));
      sentences.push_back(std::move(js));
    }
    jb["sentences"] = std::move(sentences);
    bags.push_back(std::move(jb));
  }
  j["bags"] = std::move(bags);
  return j;
}

namespace {
std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void write_pr_csv(const std::string& path, const PrCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write PR csv: " + path);
  out << "recall,precision\n";
  for (const PrPoint& p : curve.points) {
    out << fmt_double(p.recall) << "," << fmt_double(p.precision) << "\n";
  }
}

PrCurve read_pr_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open PR csv: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "recall,precision") {
    throw ParseError("PR csv: bad header");
  }
  PrCurve curve;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t comma = line.find(',');
    if (comma == std::string::npos) {
      throw ParseError("PR csv line " + std::to_string(line_no) + ": missing comma");
    }
    try {
      PrPoint p;
      p.recall = std::stod(line.substr(0, comma));
      p.precision = std::stod(line.substr(comma + 1));
      curve.points.push_back(p);
    } catch (const std::exception&) {
      throw ParseError("PR csv line " + std::to_string(line_no) + ": bad number");
    }
  }
  return curve;
}

void write_ranking_csv(const std::string& path, const EvalRanking& ranking,
                       const RelationSchema& schema) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write ranking csv: " + path);
  out << "bag_id,relation,score,correct\n";
  for (const auto& e : ranking.entries) {
    out << e.bag_id << "," << schema.name(e.relation) << "," << fmt_double(e.score) << ","
        << (e.correct ? 1 : 0) << "\n";
  }
}

model::MetricFn make_dev_auc_metric(std::vector<Bag> dev_bags, Annotations annotations,
                                    const corpus::Vocabulary& vocab, int na_index) {
  return [dev_bags = std::move(dev_bags), annotations = std::move(annotations), &vocab,
          na_index](const TrainState& state) {
    EvalRanking ranking = decode_testset(dev_bags, state, vocab, annotations, na_index);
    return auc(pr_curve(ranking));
  };
}

}  // namespace relex::eval
