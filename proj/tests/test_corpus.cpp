#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <doctest.h>

#include "relex/corpus.hpp"
#include "relex/errors.hpp"
#include "relex/synth.hpp"

using namespace relex;
using namespace relex::corpus;

namespace {

namespace fs = std::filesystem;

fs::path tmp_dir() {
  fs::path dir = fs::temp_directory_path() / "relex_corpus_tests";
  fs::create_directories(dir);
  return dir;
}

std::string write_tmp(const std::string& name, const std::string& content) {
  fs::path p = tmp_dir() / name;
  std::ofstream out(p);
  out << content;
  return p.string();
}

RelationSchema test_schema() { return RelationSchema({"NA", "born_in", "lives_in"}); }

SentenceRecord make_record(const std::string& head, const std::string& tail,
                           const std::string& rel, std::vector<std::string> tokens = {},
                           int head_pos = 0, int tail_pos = 1) {
  if (tokens.empty()) tokens = {"alice", "paris", "is", "nice"};
  return SentenceRecord{std::move(tokens), head_pos, tail_pos, head, tail, rel};
}

}  // namespace

TEST_CASE("relation schema") {
  RelationSchema schema = test_schema();
  CHECK(schema.size() == 3);
  CHECK(schema.na_index() == 0);
  CHECK(schema.id_of("born_in") == 1);
  CHECK(schema.id_of("unknown") == -1);
  CHECK_THROWS_AS(RelationSchema({"born_in"}), SchemaError);           // NA missing
  CHECK_THROWS_AS(RelationSchema({"NA", "x", "x"}), SchemaError);      // duplicate
  CHECK_THROWS_AS(RelationSchema({"NA", "a,b"}), SchemaError);         // reserved char

  std::string path = write_tmp("schema.json", "[\"NA\", \"born_in\"]");
  RelationSchema loaded = RelationSchema::load(path);
  CHECK(loaded.size() == 2);
}

TEST_CASE("load_corpus basics") {
  RelationSchema schema = test_schema();

  CHECK(load_corpus(write_tmp("empty.jsonl", ""), schema).empty());

  std::string one =
      R"({"tokens":["obama","was","born","in","hawaii"],"head_pos":0,"tail_pos":4,)"
      R"("head_id":"e1","tail_id":"e2","relation":"born_in"})"
      "\n";
  auto records = load_corpus(write_tmp("one.jsonl", one), schema);
  REQUIRE(records.size() == 1);
  CHECK(records[0].tokens.size() == 5);
  CHECK(records[0].head_pos == 0);
  CHECK(records[0].tail_pos == 4);
  CHECK(records[0].relation == "born_in");

  // head_pos == tail_pos violates the record invariant.
  std::string same_pos =
      R"({"tokens":["a","b"],"head_pos":1,"tail_pos":1,"head_id":"x","tail_id":"y",)"
      R"("relation":"born_in"})";
  CHECK_THROWS_AS(load_corpus(write_tmp("same.jsonl", same_pos), schema), ParseError);

  CHECK_THROWS_AS(load_corpus(write_tmp("junk.jsonl", "not json"), schema), ParseError);

  std::string unknown_rel =
      R"({"tokens":["a","b"],"head_pos":0,"tail_pos":1,"head_id":"x","tail_id":"y",)"
      R"("relation":"mystery"})";
  CHECK_THROWS_AS(load_corpus(write_tmp("rel.jsonl", unknown_rel), schema), SchemaError);

  std::string extra_key =
      R"({"tokens":["a","b"],"head_pos":0,"tail_pos":1,"head_id":"x","tail_id":"y",)"
      R"("relation":"born_in","bonus":1})";
  CHECK_THROWS_AS(load_corpus(write_tmp("extra.jsonl", extra_key), schema), ParseError);

  // Line numbers show up in diagnostics.
  std::string two_lines = one + "garbage\n";
  try {
    load_corpus(write_tmp("two.jsonl", two_lines), schema);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("save/load corpus round trip") {
  RelationSchema schema = test_schema();
  std::vector<SentenceRecord> records = {
      make_record("e1", "e2", "born_in", {"x", "y", "z"}, 2, 0),
      make_record("e3", "e4", "NA"),
  };
  std::string path = (tmp_dir() / "round.jsonl").string();
  save_corpus(path, records);
  auto loaded = load_corpus(path, schema);
  CHECK(loaded == records);
}

TEST_CASE("build_vocab threshold and ordering") {
  // "rare" appears exactly twice; with min_count=2 it must map to UNK.
  std::vector<SentenceRecord> records = {
      make_record("a", "b", "NA", {"rare", "common", "common", "common"}, 0, 1),
      make_record("c", "d", "NA", {"rare", "common", "zz", "aa"}, 0, 1),
  };
  Vocabulary strict = build_vocab(records, 2);
  CHECK(strict.id_of("common") > Vocabulary::kUnk);
  CHECK(strict.id_of("rare") == Vocabulary::kUnk);

  Vocabulary all = build_vocab(records, 0);
  CHECK(all.id_of("rare") != Vocabulary::kUnk);
  CHECK(all.id_of("zz") != Vocabulary::kUnk);
  // Frequency descending, ties lexicographic: common(4), rare(2), aa, zz.
  CHECK(all.id_of("common") == 2);
  CHECK(all.id_of("rare") == 3);
  CHECK(all.id_of("aa") == 4);
  CHECK(all.id_of("zz") == 5);
  CHECK(Vocabulary::kPad != Vocabulary::kUnk);
  CHECK(all.size() == 6);
}

TEST_CASE("pack_bags grouping") {
  RelationSchema schema = test_schema();

  auto r1 = make_record("e1", "e2", "born_in");
  auto r2 = make_record("e1", "e2", "born_in", {"p", "q", "r"}, 1, 2);
  auto bags = pack_bags({r1, r2}, schema);
  REQUIRE(bags.size() == 1);
  CHECK(bags[0].sentences.size() == 2);
  CHECK(bags[0].sentences[0] == r1);  // corpus order preserved
  CHECK(bags[0].sentences[1] == r2);

  auto two_pairs = pack_bags({r1, make_record("e3", "e4", "born_in")}, schema);
  CHECK(two_pairs.size() == 2);

  // Same pair under two relations: one bag per (pair, relation).
  auto r3 = make_record("e1", "e2", "lives_in");
  auto split = pack_bags({r1, r3}, schema);
  CHECK(split.size() == 2);

  // Enumerated grouping oracle: count distinct (pair, relation) keys.
  std::vector<SentenceRecord> mixed = {r1, r2, r3, make_record("e3", "e4", "NA"), r1};
  std::set<std::tuple<std::string, std::string, std::string>> keys;
  for (const auto& rec : mixed) keys.insert({rec.head_id, rec.tail_id, rec.relation});
  auto packed = pack_bags(mixed, schema);
  CHECK(packed.size() == keys.size());

  // Flattening recovers the exact multiset of inputs.
  std::vector<SentenceRecord> flattened;
  for (const auto& bag : packed)
    for (const auto& s : bag.sentences) flattened.push_back(s);
  CHECK(flattened.size() == mixed.size());
  auto key_of = [](const SentenceRecord& r) {
    std::string k = r.head_id + "|" + r.tail_id + "|" + r.relation;
    for (const auto& t : r.tokens) k += "|" + t;
    return k;
  };
  std::multiset<std::string> in_keys, out_keys;
  for (const auto& r : mixed) in_keys.insert(key_of(r));
  for (const auto& r : flattened) out_keys.insert(key_of(r));
  CHECK(in_keys == out_keys);
}

TEST_CASE("pack_bags_by_pair ignores labels") {
  auto r1 = make_record("e1", "e2", "born_in");
  auto r2 = make_record("e1", "e2", "lives_in");
  auto bags = pack_bags_by_pair({r1, r2});
  REQUIRE(bags.size() == 1);
  CHECK(bags[0].sentences.size() == 2);
  CHECK(bags[0].relation_id == -1);
}

namespace {

std::vector<Bag> bags_of(int count, int relation, const std::string& prefix) {
  std::vector<Bag> bags;
  for (int i = 0; i < count; ++i) {
    Bag bag;
    bag.head_id = prefix + std::to_string(i) + "h";
    bag.tail_id = prefix + std::to_string(i) + "t";
    bag.relation_id = relation;
    bag.sentences = {make_record(bag.head_id, bag.tail_id, "r")};
    bags.push_back(bag);
  }
  return bags;
}

}  // namespace

TEST_CASE("pack_groups padding and NA singletons") {
  const int na = 0;
  auto bags = bags_of(7, 1, "b");

  auto groups = pack_groups(bags, 5, 42, na);
  REQUIRE(groups.size() == 2);  // ceil(7/5) count oracle
  std::multiset<std::string> seen;
  for (const auto& g : groups) {
    CHECK(g.relation_id == 1);
    CHECK(g.bags.size() == 5);  // remainder padded by resampling
    for (const auto& b : g.bags) seen.insert(b.head_id);
  }
  // All 7 distinct bags covered at least once, 3 duplicates from padding.
  std::set<std::string> distinct(seen.begin(), seen.end());
  CHECK(distinct.size() == 7);
  CHECK(seen.size() == 10);

  auto singles = pack_groups(bags, 1, 42, na);
  CHECK(singles.size() == 7);
  for (const auto& g : singles) CHECK(g.bags.size() == 1);

  auto na_bags = bags_of(3, na, "n");
  auto na_groups = pack_groups(na_bags, 5, 42, na);
  CHECK(na_groups.size() == 3);
  for (const auto& g : na_groups) {
    CHECK(g.bags.size() == 1);
    CHECK(g.relation_id == na);
  }
}

TEST_CASE("pack_groups covers every bag and keeps labels uniform") {
  std::vector<Bag> bags;
  for (int rel = 1; rel <= 3; ++rel) {
    auto more = bags_of(4 + rel, rel, "r" + std::to_string(rel) + "_");
    bags.insert(bags.end(), more.begin(), more.end());
  }
  auto na_bags = bags_of(4, 0, "na_");
  bags.insert(bags.end(), na_bags.begin(), na_bags.end());

  auto groups = pack_groups(bags, 3, 7, 0);
  std::set<std::string> covered;
  for (const auto& g : groups) {
    for (const auto& b : g.bags) {
      CHECK(b.relation_id == g.relation_id);
      covered.insert(b.head_id);
    }
    if (g.relation_id != 0) CHECK(g.bags.size() == 3);
  }
  CHECK(covered.size() == bags.size());

  CHECK_THROWS_AS(pack_groups(bags, 0, 7, 0), ContractError);
}

TEST_CASE("synthetic generator noise annotations") {
  SynthSpec spec;
  spec.num_relations = 3;
  spec.vocab_size = 30;
  spec.bags_per_relation = 40;
  spec.seed = 5;

  SUBCASE("zero rates mean zero noise") {
    spec.noisy_sentence_rate = 0.0;
    spec.noisy_bag_rate = 0.0;
    auto corpus = gen_synthetic(spec);
    for (const auto& a : corpus.annotations) {
      CHECK_FALSE(a.noisy_bag);
      CHECK(a.noisy_sentences.empty());
    }
  }

  SUBCASE("noisy_bag_rate 1 marks every positive bag") {
    spec.noisy_bag_rate = 1.0;
    auto corpus = gen_synthetic(spec);
    for (const auto& a : corpus.annotations) {
      if (a.relation != "NA") CHECK(a.noisy_bag);
      else CHECK_FALSE(a.noisy_bag);
    }
  }
}

TEST_CASE("synthetic generator is byte-deterministic") {
  SynthSpec spec;
  spec.num_relations = 2;
  spec.bags_per_relation = 15;
  spec.noisy_sentence_rate = 0.3;
  spec.noisy_bag_rate = 0.2;
  spec.seed = 99;
  auto c1 = gen_synthetic(spec);
  auto c2 = gen_synthetic(spec);
  CHECK(c1.train == c2.train);
  CHECK(c1.test == c2.test);

  std::string p1 = (tmp_dir() / "det1.jsonl").string();
  std::string p2 = (tmp_dir() / "det2.jsonl").string();
  save_corpus(p1, c1.train);
  save_corpus(p2, c2.train);
  std::ifstream f1(p1), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}

TEST_CASE("synthetic corpus is loadable and annotations round-trip") {
  SynthSpec spec;
  spec.num_relations = 2;
  spec.bags_per_relation = 10;
  spec.noisy_sentence_rate = 0.4;
  spec.noisy_bag_rate = 0.3;
  spec.seed = 3;
  auto corpus = gen_synthetic(spec);

  std::string path = (tmp_dir() / "synth.jsonl").string();
  save_corpus(path, corpus.train);
  auto loaded = load_corpus(path, corpus.schema);
  CHECK(loaded == corpus.train);

  std::string ann_path = (tmp_dir() / "noise.json").string();
  save_annotations(ann_path, corpus.annotations);
  auto anns = load_annotations(ann_path);
  REQUIRE(anns.size() == corpus.annotations.size());
  for (std::size_t i = 0; i < anns.size(); ++i) {
    CHECK(anns[i].head_id == corpus.annotations[i].head_id);
    CHECK(anns[i].noisy_bag == corpus.annotations[i].noisy_bag);
    CHECK(anns[i].noisy_sentences == corpus.annotations[i].noisy_sentences);
  }
}

TEST_CASE("synthetic noise rates converge to the configured rates") {
  SynthSpec spec;
  spec.num_relations = 4;
  spec.bags_per_relation = 600;
  spec.noisy_sentence_rate = 0.3;
  spec.noisy_bag_rate = 0.25;
  spec.min_sentences_per_bag = 1;
  spec.max_sentences_per_bag = 4;
  spec.seed = 12345;
  auto corpus = gen_synthetic(spec);

  long positive_bags = 0, noisy_bags = 0;
  long clean_bag_sentences = 0, noisy_sentences = 0;
  std::map<std::pair<std::string, std::string>, long> bag_sizes;
  for (const auto& rec : corpus.train) ++bag_sizes[{rec.head_id, rec.tail_id}];
  for (const auto& a : corpus.annotations) {
    if (a.relation == "NA") continue;
    ++positive_bags;
    if (a.noisy_bag) {
      ++noisy_bags;
    } else {
      clean_bag_sentences += bag_sizes.at({a.head_id, a.tail_id});
      noisy_sentences += static_cast<long>(a.noisy_sentences.size());
    }
  }
  double bag_rate = static_cast<double>(noisy_bags) / positive_bags;
  double bag_se = std::sqrt(0.25 * 0.75 / positive_bags);
  CHECK(std::fabs(bag_rate - 0.25) <= 3.0 * bag_se);

  double sent_rate = static_cast<double>(noisy_sentences) / clean_bag_sentences;
  double sent_se = std::sqrt(0.3 * 0.7 / clean_bag_sentences);
  CHECK(std::fabs(sent_rate - 0.3) <= 3.0 * sent_se);
}

TEST_CASE("synthetic records satisfy corpus invariants") {
  SynthSpec spec;
  spec.num_relations = 2;
  spec.bags_per_relation = 20;
  spec.noisy_bag_rate = 0.5;
  spec.noisy_sentence_rate = 0.5;
  spec.seed = 8;
  auto corpus = gen_synthetic(spec);
  for (const auto* split : {&corpus.train, &corpus.test}) {
    for (const auto& rec : *split) {
      int len = static_cast<int>(rec.tokens.size());
      CHECK(len >= spec.min_sentence_len);
      CHECK(len <= spec.max_sentence_len);
      CHECK(rec.head_pos >= 0);
      CHECK(rec.head_pos < len);
      CHECK(rec.tail_pos >= 0);
      CHECK(rec.tail_pos < len);
      CHECK(rec.head_pos != rec.tail_pos);
      CHECK(corpus.schema.id_of(rec.relation) >= 0);
    }
  }
  SynthSpec bad = spec;
  bad.noisy_bag_rate = 1.5;
  CHECK_THROWS_AS(gen_synthetic(bad), ContractError);
}
