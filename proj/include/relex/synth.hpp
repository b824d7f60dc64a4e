#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relex/corpus.hpp"

namespace relex::corpus {

// Recipe for a synthetic noisy corpus. Each positive relation gets a
// distinct pair of marker tokens planted right after the two entity
// mentions; de-noising behaviour is then directly observable against the
// generated ground truth.
struct SynthSpec {
  int num_relations = 8;      // positive relations, NA excluded
  int vocab_size = 100;       // filler word inventory
  int min_sentences_per_bag = 1;
  int max_sentences_per_bag = 5;
  int bags_per_relation = 200;  // training bags per positive relation
  double noisy_sentence_rate = 0.0;  // rho_s: distractor sentences in clean bags
  double noisy_bag_rate = 0.0;       // rho_b: mislabeled bags
  std::uint64_t seed = 1;

  // Plumbing knobs with derived defaults (0 / negative = derive).
  int test_bags_per_relation = 0;  // default bags_per_relation / 4, min 1
  int na_bags = -1;                // default bags_per_relation
  int na_test_bags = -1;           // default = test bags per relation
  int min_sentence_len = 8;
  int max_sentence_len = 14;
  int entity_token_pool = 200;  // surface forms shared across entity ids

  void validate() const;
};

// Ground-truth noise marks for one training bag. noisy_bag means the bag
// label itself is wrong (all sentences drawn from another relation's
// pattern or from none); noisy_sentences lists pattern-free distractors
// inside an otherwise clean positive bag.
struct NoiseAnnotation {
  std::string head_id;
  std::string tail_id;
  std::string relation;
  bool noisy_bag = false;
  std::vector<int> noisy_sentences;
};

struct SynthCorpus {
  std::vector<SentenceRecord> train;
  // Test labels are always correct; each positive test bag expresses its
  // relation in at least one sentence, extra sentences may be distractors.
  std::vector<SentenceRecord> test;
  RelationSchema schema;
  std::vector<NoiseAnnotation> annotations;  // one per training bag
};

// Deterministic under spec.seed: two calls produce identical corpora.
SynthCorpus gen_synthetic(const SynthSpec& spec);

void save_annotations(const std::string& path, const std::vector<NoiseAnnotation>& annotations);
std::vector<NoiseAnnotation> load_annotations(const std::string& path);

}  // namespace relex::corpus
