#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace relex::corpus {

// One tokenized sentence with two marked entities and a relation label.
struct SentenceRecord {
  std::vector<std::string> tokens;
  int head_pos = -1;
  int tail_pos = -1;
  std::string head_id;
  std::string tail_id;
  std::string relation;

  bool operator==(const SentenceRecord&) const = default;
};

// Ordered relation names; "NA" (no relation) must be present.
class RelationSchema {
 public:
  RelationSchema() = default;
  explicit RelationSchema(std::vector<std::string> names);

  static RelationSchema load(const std::string& path);
  void save(const std::string& path) const;

  int size() const { return static_cast<int>(names_.size()); }
  int na_index() const { return na_index_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int id) const { return names_.at(id); }
  // -1 when the name is unknown.
  int id_of(const std::string& name) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
  int na_index_ = -1;
};

// Word-to-id map with reserved PAD and UNK slots. A word is mapped iff it
// occurred strictly more than min_count times in the corpus it was built
// from; ids are assigned by descending frequency, ties broken
// lexicographically.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, int min_count);

  int size() const { return static_cast<int>(id_to_word_.size()); }
  int min_count() const { return min_count_; }
  int id_of(const std::string& word) const;
  const std::vector<std::string>& id_to_word() const { return id_to_word_; }

 private:
  std::vector<std::string> id_to_word_;
  std::unordered_map<std::string, int> word_to_id_;
  int min_count_ = 0;
};

Vocabulary build_vocab(const std::vector<SentenceRecord>& records, int min_count);

// All sentences sharing one entity pair (and, at train time, one label).
struct Bag {
  std::string head_id;
  std::string tail_id;
  std::vector<SentenceRecord> sentences;
  // Label index; -1 for test-time bags packed by pair only.
  int relation_id = -1;
};

// n bags sharing a relation label; the training sample unit.
struct BagGroup {
  std::vector<Bag> bags;
  int relation_id = -1;
};

// Corpus file: UTF-8, one JSON object per line with keys tokens, head_pos,
// tail_pos, head_id, tail_id, relation. Malformed lines raise ParseError
// with the line number; unknown relation names raise SchemaError.
std::vector<SentenceRecord> load_corpus(const std::string& path, const RelationSchema& schema);
void save_corpus(const std::string& path, const std::vector<SentenceRecord>& records);

// One bag per (head_id, tail_id, relation) triple, in corpus order.
std::vector<Bag> pack_bags(const std::vector<SentenceRecord>& records,
                           const RelationSchema& schema);
// Test-time packing: one bag per entity pair, labels ignored
// (relation_id = -1).
std::vector<Bag> pack_bags_by_pair(const std::vector<SentenceRecord>& records);

// Ties non-NA bags of each relation into groups of exactly n (remainders
// padded by resampling with replacement from the same relation); every NA
// bag becomes its own singleton group, which keeps inter-bag attention
// restricted to positive samples.
std::vector<BagGroup> pack_groups(const std::vector<Bag>& bags, int n,
                                  std::uint64_t shuffle_seed, int na_index);

}  // namespace relex::corpus
