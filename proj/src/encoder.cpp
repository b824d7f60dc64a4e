#include "relex/encoder.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "relex/errors.hpp"

namespace relex::encoder {

int distance_index(int offset, int max_dist) {
  int clipped = std::clamp(offset, -max_dist, max_dist);
  return clipped + max_dist;
}

std::vector<int> token_ids(const SentenceRecord& record, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(record.tokens.size());
  for (const auto& tok : record.tokens) ids.push_back(vocab.id_of(tok));
  return ids;
}

Var word_repr(Tape& tape, const SentenceRecord& record, const Vocabulary& vocab,
              Var word_table, Var pos_head, Var pos_tail, const EncoderDims& dims) {
  const int len = static_cast<int>(record.tokens.size());
  if (len == 0) throw ContractError("word_repr: empty sentence");
  if (record.head_pos < 0 || record.head_pos >= len || record.tail_pos < 0 ||
      record.tail_pos >= len) {
    throw ContractError("word_repr: entity position out of range");
  }
  std::vector<int> head_idx(len), tail_idx(len);
  for (int k = 0; k < len; ++k) {
    head_idx[k] = distance_index(k - record.head_pos, dims.max_dist);
    tail_idx[k] = distance_index(k - record.tail_pos, dims.max_dist);
  }
  std::array<Var, 3> parts = {
      tape.gather_rows(word_table, token_ids(record, vocab)),
      tape.gather_rows(pos_head, std::move(head_idx)),
      tape.gather_rows(pos_tail, std::move(tail_idx)),
  };
  return tape.concat_cols(parts);
}

namespace {

// Shared conv stem: zero-padded window unfold followed by the filter bank.
Var conv_features(Tape& tape, Var words, Var kernel, Var bias) {
  const Matrix& kv = tape.value(kernel);
  const Matrix& wv = tape.value(words);
  if (kv.cols() % wv.cols() != 0) {
    throw ShapeError("conv kernel width " + kv.shape_str() +
                          " incompatible with word rows " + wv.shape_str());
  }
  int window = kv.cols() / wv.cols();
  Var unfolded = tape.unfold_window(words, window);
  Var feat = tape.matmul(unfolded, tape.transpose(kernel));  // l x d_c
  return tape.add_rowvec(feat, bias);
}

}  // namespace

Var pcnn_encode(Tape& tape, Var words, int head_pos, int tail_pos, Var kernel, Var bias) {
  if (head_pos == tail_pos) throw ContractError("pcnn_encode: entity positions coincide");
  Var feat = conv_features(tape, words, kernel, bias);
  int p1 = std::min(head_pos, tail_pos);
  int p2 = std::max(head_pos, tail_pos);
  Var pooled = tape.piecewise_max_rows(feat, p1, p2);
  return tape.tanh(pooled);
}

Var cnn_encode(Tape& tape, Var words, Var kernel, Var bias) {
  Var feat = conv_features(tape, words, kernel, bias);
  return tape.tanh(tape.max_rows(feat));
}

Matrix encode_sentence_pcnn(const SentenceRecord& record, const Vocabulary& vocab,
                            const EmbeddingTables& tables, const ConvParams& conv,
                            const EncoderDims& dims) {
  Tape tape;
  Var words = word_repr(tape, record, vocab, tape.leaf(tables.word_table),
                        tape.leaf(tables.pos_head), tape.leaf(tables.pos_tail), dims);
  Var s = pcnn_encode(tape, words, record.head_pos, record.tail_pos, tape.leaf(conv.kernel),
                      tape.leaf(conv.bias));
  return tape.value(s);
}

int load_pretrained_embeddings(const std::string& path, const Vocabulary& vocab,
                               Matrix& word_table) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file: " + path);
  std::string line;
  int line_no = 0;
  int filled = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    int id = vocab.id_of(word);
    bool in_vocab = id != Vocabulary::kUnk;
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (!ss.eof()) {
      throw ParseError("embedding file line " + std::to_string(line_no) + ": bad number");
    }
    if (static_cast<int>(values.size()) != word_table.cols()) {
      throw ParseError("embedding file line " + std::to_string(line_no) + ": expected " +
                       std::to_string(word_table.cols()) + " values, got " +
                       std::to_string(values.size()));
    }
    if (!in_vocab) continue;  // words outside the vocabulary are skipped
    for (int c = 0; c < word_table.cols(); ++c) word_table(id, c) = values[c];
    ++filled;
  }
  return filled;
}

}  // namespace relex::encoder
