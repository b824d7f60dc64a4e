#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relex/corpus.hpp"
#include "relex/model.hpp"

namespace relex::eval {

using corpus::Bag;
using corpus::BagGroup;
using corpus::RelationSchema;
using corpus::SentenceRecord;
using model::TrainState;

// Held-out facts: entity pair -> set of annotated positive relation ids.
using Annotations = std::map<std::pair<std::string, std::string>, std::set<int>>;

Annotations annotations_from_records(const std::vector<SentenceRecord>& records,
                                     const RelationSchema& schema);

inline std::string bag_id_of(const Bag& bag) { return bag.head_id + "|" + bag.tail_id; }

struct RankingEntry {
  std::string bag_id;
  int relation = -1;
  double score = 0.0;
  bool correct = false;
};

// Scored (bag, relation) predictions sorted by score descending, ties
// broken by (bag_id, relation) ascending so rankings are reproducible. NA
// is never ranked. total_positives counts the annotated facts.
struct EvalRanking {
  std::vector<RankingEntry> entries;
  long total_positives = 0;
};

// Each bag runs as a singleton group (dropout off); one entry per non-NA
// relation.
EvalRanking decode_testset(const std::vector<Bag>& bags, const TrainState& state,
                           const corpus::Vocabulary& vocab, const Annotations& annotations,
                           int na_index);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // one per ranking prefix
  long total_positives = 0;
};

PrCurve pr_curve(const EvalRanking& ranking);

// Trapezoidal area over the recall axis, using the first top_k prefix
// points when top_k > 0. The segment from recall 0 to the first point uses
// that point's precision.
double auc(const PrCurve& curve, long top_k = 0);

// Precision among the N highest-scoring entries.
double p_at_n(const EvalRanking& ranking, long n);

// The random-subsample test sets used for P@N: keep entity pairs with more
// than one sentence, then retain 1, 2, or all of each bag's sentences.
enum class SubsampleMode { kOne, kTwo, kAll };
SubsampleMode subsample_mode_from(const std::string& s);
std::string to_string(SubsampleMode mode);
std::vector<Bag> subsample_bags(const std::vector<Bag>& bags, SubsampleMode mode,
                                std::uint64_t seed);

// Inter-bag attention weight at the labeled relation, bucketed by the
// number of sentences in the bag ({1,2,3,4,>=5}).
struct WeightBucket {
  std::string label;
  long count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

std::vector<WeightBucket> weight_distribution(const std::vector<BagGroup>& groups,
                                              const TrainState& state,
                                              const corpus::Vocabulary& vocab);

// Human-readable case study: per-sentence intra-bag weights at the labeled
// relation and per-bag inter-bag weights, echoing forward_group bitwise.
nlohmann::json dump_case(const BagGroup& group, const TrainState& state,
                         const corpus::Vocabulary& vocab, const RelationSchema& schema);

// CSV exports. PR curve: header "recall,precision". Ranking: header
// "bag_id,relation,score,correct".
void write_pr_csv(const std::string& path, const PrCurve& curve);
PrCurve read_pr_csv(const std::string& path);
void write_ranking_csv(const std::string& path, const EvalRanking& ranking,
                       const RelationSchema& schema);

// Dev metric for the training convergence rule: AUC of the singleton-group
// decode of `dev_bags`.
model::MetricFn make_dev_auc_metric(std::vector<Bag> dev_bags, Annotations annotations,
                                    const corpus::Vocabulary& vocab, int na_index);

}  // namespace relex::eval
