#include "relex/synth.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "relex/errors.hpp"
#include "relex/rng.hpp"

namespace relex::corpus {

using nlohmann::json;

void SynthSpec::validate() const {
  if (num_relations < 1) throw ContractError("synth: num_relations must be >= 1");
  if (vocab_size < 1) throw ContractError("synth: vocab_size must be >= 1");
  if (min_sentences_per_bag < 1 || max_sentences_per_bag < min_sentences_per_bag) {
    throw ContractError("synth: invalid sentences_per_bag range");
  }
  if (bags_per_relation < 1) throw ContractError("synth: bags_per_relation must be >= 1");
  if (noisy_sentence_rate < 0.0 || noisy_sentence_rate > 1.0 || noisy_bag_rate < 0.0 ||
      noisy_bag_rate > 1.0) {
    throw ContractError("synth: noise rates must lie in [0, 1]");
  }
  // Length 4 is the minimum that fits two mentions (gap >= 2) plus a
  // trailing marker slot.
  if (min_sentence_len < 4 || max_sentence_len < min_sentence_len) {
    throw ContractError("synth: sentence length range must be within [4, ...]");
  }
  if (entity_token_pool < 2) throw ContractError("synth: entity_token_pool must be >= 2");
}

namespace {

std::string fill_word(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%03d", i);
  return buf;
}

std::string entity_word(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ent%03d", i);
  return buf;
}

// Marker tokens follow the two mentions. Relations share individual
// markers (relation = one head marker combined with one tail marker), so
// telling relations apart needs both halves of the pattern, not a single
// giveaway token.
int marker_base(int num_relations) {
  int a = 1;
  while (a * a < num_relations) ++a;
  return a;
}

std::string head_marker(int r, int num_relations) {
  return "pa" + std::to_string((r - 1) % marker_base(num_relations));
}

std::string tail_marker(int r, int num_relations) {
  return "pb" + std::to_string((r - 1) / marker_base(num_relations));
}

struct SentencePlan {
  // pattern_relation < 0 means a pattern-free sentence.
  int pattern_relation = -1;
};

// Builds one sentence. Entity order is randomized; when a pattern is
// requested its markers land directly after the two mentions, giving the
// convolution window an unambiguous local feature.
SentenceRecord make_sentence(const SynthSpec& spec, const std::string& head_id,
                             const std::string& tail_id, const std::string& relation,
                             int pattern_relation, Rng& rng) {
  int len = spec.min_sentence_len + rng.uniform_int(spec.max_sentence_len -
                                                    spec.min_sentence_len + 1);
  SentenceRecord rec;
  rec.head_id = head_id;
  rec.tail_id = tail_id;
  rec.relation = relation;
  rec.tokens.resize(len);
  for (int i = 0; i < len; ++i) rec.tokens[i] = fill_word(rng.uniform_int(spec.vocab_size));

  // first < second with a gap of at least 2 and room for a trailing marker.
  int first = rng.uniform_int(len - 3);
  int second = first + 2 + rng.uniform_int(len - 2 - (first + 2) + 1);
  bool head_first = rng.bernoulli(0.5);
  rec.head_pos = head_first ? first : second;
  rec.tail_pos = head_first ? second : first;

  int e1 = rng.uniform_int(spec.entity_token_pool);
  int e2 = rng.uniform_int(spec.entity_token_pool - 1);
  if (e2 >= e1) ++e2;
  rec.tokens[rec.head_pos] = entity_word(e1);
  rec.tokens[rec.tail_pos] = entity_word(e2);
  if (pattern_relation >= 0) {
    rec.tokens[rec.head_pos + 1] = head_marker(pattern_relation, spec.num_relations);
    rec.tokens[rec.tail_pos + 1] = tail_marker(pattern_relation, spec.num_relations);
  }
  return rec;
}

}  // namespace

SynthCorpus gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  std::vector<std::string> names;
  names.push_back("NA");
  for (int r = 0; r < spec.num_relations; ++r) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "rel%02d", r);
    names.push_back(buf);
  }
  SynthCorpus out;
  out.schema = RelationSchema(std::move(names));

  int test_bags = spec.test_bags_per_relation > 0 ? spec.test_bags_per_relation
                                                  : std::max(1, spec.bags_per_relation / 4);
  int na_bags = spec.na_bags >= 0 ? spec.na_bags : spec.bags_per_relation;
  int na_test = spec.na_test_bags >= 0 ? spec.na_test_bags : test_bags;

  long pair_counter = 0;
  auto fresh_pair = [&pair_counter]() {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "e%06ld", pair_counter++);
    return std::make_pair(std::string(buf) + "h", std::string(buf) + "t");
  };

  // Training bags, positive relations first (relation ids 1..R).
  for (int r = 1; r <= spec.num_relations; ++r) {
    const std::string& rel_name = out.schema.name(r);
    for (int b = 0; b < spec.bags_per_relation; ++b) {
      auto [head_id, tail_id] = fresh_pair();
      int m = spec.min_sentences_per_bag +
              rng.uniform_int(spec.max_sentences_per_bag - spec.min_sentences_per_bag + 1);
      NoiseAnnotation ann;
      ann.head_id = head_id;
      ann.tail_id = tail_id;
      ann.relation = rel_name;
      ann.noisy_bag = rng.bernoulli(spec.noisy_bag_rate);
      int wrong_pattern = -1;
      if (ann.noisy_bag && spec.num_relations > 1 && rng.bernoulli(0.8)) {
        // Most noisy bags carry another relation's pattern (the damaging
        // kind of labeling error); the rest carry none at all.
        wrong_pattern = 1 + rng.uniform_int(spec.num_relations - 1);
        if (wrong_pattern >= r) ++wrong_pattern;
      }
      for (int s = 0; s < m; ++s) {
        int pattern;
        if (ann.noisy_bag) {
          pattern = wrong_pattern;
        } else if (rng.bernoulli(spec.noisy_sentence_rate)) {
          pattern = -1;
          ann.noisy_sentences.push_back(s);
        } else {
          pattern = r;
        }
        out.train.push_back(make_sentence(spec, head_id, tail_id, rel_name, pattern, rng));
      }
      out.annotations.push_back(std::move(ann));
    }
  }
  // NA training bags: no planted pattern anywhere.
  for (int b = 0; b < na_bags; ++b) {
    auto [head_id, tail_id] = fresh_pair();
    int m = spec.min_sentences_per_bag +
            rng.uniform_int(spec.max_sentences_per_bag - spec.min_sentences_per_bag + 1);
    NoiseAnnotation ann;
    ann.head_id = head_id;
    ann.tail_id = tail_id;
    ann.relation = "NA";
    for (int s = 0; s < m; ++s) {
      out.train.push_back(make_sentence(spec, head_id, tail_id, "NA", -1, rng));
    }
    out.annotations.push_back(std::move(ann));
  }

  // Test bags: labels are always correct and each positive bag expresses
  // its relation at least once; the remaining sentences degrade to
  // distractors at the sentence-noise rate, so test-time decisions still
  // hinge on finding the expressing sentence.
  for (int r = 1; r <= spec.num_relations; ++r) {
    const std::string& rel_name = out.schema.name(r);
    for (int b = 0; b < test_bags; ++b) {
      auto [head_id, tail_id] = fresh_pair();
      int m = spec.min_sentences_per_bag +
              rng.uniform_int(spec.max_sentences_per_bag - spec.min_sentences_per_bag + 1);
      for (int s = 0; s < m; ++s) {
        int pattern = (s == 0 || !rng.bernoulli(spec.noisy_sentence_rate)) ? r : -1;
        out.test.push_back(make_sentence(spec, head_id, tail_id, rel_name, pattern, rng));
      }
    }
  }
  for (int b = 0; b < na_test; ++b) {
    auto [head_id, tail_id] = fresh_pair();
    int m = spec.min_sentences_per_bag +
            rng.uniform_int(spec.max_sentences_per_bag - spec.min_sentences_per_bag + 1);
    for (int s = 0; s < m; ++s) {
      out.test.push_back(make_sentence(spec, head_id, tail_id, "NA", -1, rng));
    }
  }
  return out;
}

void save_annotations(const std::string& path, const std::vector<NoiseAnnotation>& annotations) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write annotations file: " + path);
  json arr = json::array();
  for (const auto& a : annotations) {
    json j;
    j["head_id"] = a.head_id;
    j["tail_id"] = a.tail_id;
    j["relation"] = a.relation;
    j["noisy_bag"] = a.noisy_bag;
    j["noisy_sentences"] = a.noisy_sentences;
    arr.push_back(std::move(j));
  }
  out << arr.dump(2) << "\n";
}

std::vector<NoiseAnnotation> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotations file: " + path);
  json arr;
  try {
    in >> arr;
  } catch (const json::exception& e) {
    throw ParseError(std::string("annotations file: ") + e.what());
  }
  if (!arr.is_array()) throw ParseError("annotations file must be a JSON array");
  std::vector<NoiseAnnotation> out;
  for (const auto& j : arr) {
    NoiseAnnotation a;
    try {
      a.head_id = j.at("head_id").get<std::string>();
      a.tail_id = j.at("tail_id").get<std::string>();
      a.relation = j.at("relation").get<std::string>();
      a.noisy_bag = j.at("noisy_bag").get<bool>();
      a.noisy_sentences = j.at("noisy_sentences").get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("annotations file: ") + e.what());
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace relex::corpus
