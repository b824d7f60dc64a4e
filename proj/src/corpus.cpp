#include "relex/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include <json.hpp>

#include "relex/errors.hpp"
#include "relex/rng.hpp"

namespace relex::corpus {

using nlohmann::json;

namespace {

// Entity ids flow into CSV exports and "head|tail" bag ids, so keep the
// separators out of them.
void validate_id(const std::string& id, int line_no, const char* field) {
  if (id.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": empty " + field);
  }
  if (id.find_first_of(",|\t\n") != std::string::npos) {
    throw ParseError("line " + std::to_string(line_no) + ": " + field +
                     " contains a reserved character (one of , | tab newline)");
  }
}

}  // namespace

RelationSchema::RelationSchema(std::vector<std::string> names) : names_(std::move(names)) {
  for (int i = 0; i < static_cast<int>(names_.size()); ++i) {
    const std::string& name = names_[i];
    if (name.empty() || name.find(',') != std::string::npos) {
      throw SchemaError("invalid relation name: '" + name + "'");
    }
    if (!ids_.emplace(name, i).second) {
      throw SchemaError("duplicate relation name: '" + name + "'");
    }
    if (name == "NA") na_index_ = i;
  }
  if (na_index_ < 0) throw SchemaError("relation schema must contain 'NA'");
}

RelationSchema RelationSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("schema file " + path + ": " + e.what());
  }
  if (!j.is_array()) throw SchemaError("schema file must be a JSON array of relation names");
  std::vector<std::string> names;
  for (const auto& item : j) {
    if (!item.is_string()) throw SchemaError("schema entries must be strings");
    names.push_back(item.get<std::string>());
  }
  return RelationSchema(std::move(names));
}

void RelationSchema::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write schema file: " + path);
  out << json(names_).dump(2) << "\n";
}

int RelationSchema::id_of(const std::string& name) const {
  auto it = ids_.find(name);
  return it == ids_.end() ? -1 : it->second;
}

Vocabulary::Vocabulary(std::vector<std::string> words, int min_count) : min_count_(min_count) {
  id_to_word_.reserve(words.size() + 2);
  id_to_word_.push_back("<PAD>");
  id_to_word_.push_back("<UNK>");
  for (auto& w : words) {
    int id = static_cast<int>(id_to_word_.size());
    if (!word_to_id_.emplace(w, id).second) {
      throw ContractError("duplicate vocabulary word: '" + w + "'");
    }
    id_to_word_.push_back(std::move(w));
  }
}

int Vocabulary::id_of(const std::string& word) const {
  auto it = word_to_id_.find(word);
  return it == word_to_id_.end() ? kUnk : it->second;
}

Vocabulary build_vocab(const std::vector<SentenceRecord>& records, int min_count) {
  std::map<std::string, long> counts;
  for (const auto& rec : records) {
    for (const auto& tok : rec.tokens) ++counts[tok];
  }
  std::vector<std::pair<std::string, long>> kept;
  for (const auto& [word, count] : counts) {
    if (count > min_count) kept.emplace_back(word, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [word, count] : kept) words.push_back(std::move(word));
  return Vocabulary(std::move(words), min_count);
}

std::vector<SentenceRecord> load_corpus(const std::string& path, const RelationSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::vector<SentenceRecord> records;
  std::string line;
  int line_no = 0;
  static const std::set<std::string> kKeys = {"tokens",  "head_pos", "tail_pos",
                                              "head_id", "tail_id",  "relation"};
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
      if (!kKeys.count(key)) {
        throw ParseError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
    }
    for (const auto& key : kKeys) {
      if (!j.contains(key)) {
        throw ParseError("line " + std::to_string(line_no) + ": missing key '" + key + "'");
      }
    }
    SentenceRecord rec;
    try {
      rec.tokens = j.at("tokens").get<std::vector<std::string>>();
      rec.head_pos = j.at("head_pos").get<int>();
      rec.tail_pos = j.at("tail_pos").get<int>();
      rec.head_id = j.at("head_id").get<std::string>();
      rec.tail_id = j.at("tail_id").get<std::string>();
      rec.relation = j.at("relation").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    int len = static_cast<int>(rec.tokens.size());
    if (len == 0) throw ParseError("line " + std::to_string(line_no) + ": tokens is empty");
    if (rec.head_pos < 0 || rec.head_pos >= len || rec.tail_pos < 0 || rec.tail_pos >= len) {
      throw ParseError("line " + std::to_string(line_no) + ": entity position out of range");
    }
    if (rec.head_pos == rec.tail_pos) {
      throw ParseError("line " + std::to_string(line_no) + ": head_pos == tail_pos");
    }
    validate_id(rec.head_id, line_no, "head_id");
    validate_id(rec.tail_id, line_no, "tail_id");
    if (schema.id_of(rec.relation) < 0) {
      throw SchemaError("line " + std::to_string(line_no) + ": unknown relation '" +
                        rec.relation + "'");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_corpus(const std::string& path, const std::vector<SentenceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file: " + path);
  for (const auto& rec : records) {
    json j;
    j["tokens"] = rec.tokens;
    j["head_pos"] = rec.head_pos;
    j["tail_pos"] = rec.tail_pos;
    j["head_id"] = rec.head_id;
    j["tail_id"] = rec.tail_id;
    j["relation"] = rec.relation;
    out << j.dump() << "\n";
  }
}

std::vector<Bag> pack_bags(const std::vector<SentenceRecord>& records,
                           const RelationSchema& schema) {
  std::map<std::tuple<std::string, std::string, std::string>, int> index;
  std::vector<Bag> bags;
  for (const auto& rec : records) {
    auto key = std::make_tuple(rec.head_id, rec.tail_id, rec.relation);
    auto it = index.find(key);
    if (it == index.end()) {
      int rel = schema.id_of(rec.relation);
      if (rel < 0) throw SchemaError("unknown relation '" + rec.relation + "'");
      index.emplace(key, static_cast<int>(bags.size()));
      bags.push_back(Bag{rec.head_id, rec.tail_id, {rec}, rel});
    } else {
      bags[it->second].sentences.push_back(rec);
    }
  }
  return bags;
}

std::vector<Bag> pack_bags_by_pair(const std::vector<SentenceRecord>& records) {
  std::map<std::pair<std::string, std::string>, int> index;
  std::vector<Bag> bags;
  for (const auto& rec : records) {
    auto key = std::make_pair(rec.head_id, rec.tail_id);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, static_cast<int>(bags.size()));
      bags.push_back(Bag{rec.head_id, rec.tail_id, {rec}, -1});
    } else {
      bags[it->second].sentences.push_back(rec);
    }
  }
  return bags;
}

std::vector<BagGroup> pack_groups(const std::vector<Bag>& bags, int n,
                                  std::uint64_t shuffle_seed, int na_index) {
  if (n < 1) throw ContractError("pack_groups requires n >= 1");
  // Bags per relation, in corpus order.
  std::map<int, std::vector<int>> by_relation;
  for (int i = 0; i < static_cast<int>(bags.size()); ++i) {
    if (bags[i].relation_id < 0) throw ContractError("pack_groups: unlabeled bag");
    by_relation[bags[i].relation_id].push_back(i);
  }
  Rng rng(shuffle_seed);
  std::vector<BagGroup> groups;
  for (auto& [relation, members] : by_relation) {
    if (relation == na_index) {
      // NA bags train as singleton groups: the inter-bag stage is an
      // identity for them.
      for (int idx : members) groups.push_back(BagGroup{{bags[idx]}, relation});
      continue;
    }
    rng.shuffle(members);
    for (std::size_t at = 0; at < members.size(); at += n) {
      BagGroup group;
      group.relation_id = relation;
      for (std::size_t j = at; j < at + n; ++j) {
        if (j < members.size()) {
          group.bags.push_back(bags[members[j]]);
        } else {
          // Remainder group: pad by resampling with replacement so group
          // size (and the inter-bag softmax temperature) stays constant.
          int pick = members[rng.uniform_int(static_cast<int>(members.size()))];
          group.bags.push_back(bags[pick]);
        }
      }
      groups.push_back(std::move(group));
    }
  }
  return groups;
}

}  // namespace relex::corpus
