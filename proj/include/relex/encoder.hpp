#pragma once

#include <string>
#include <vector>

#include "relex/corpus.hpp"
#include "relex/tape.hpp"

namespace relex::encoder {

using corpus::SentenceRecord;
using corpus::Vocabulary;
using num::Matrix;
using num::Tape;
using num::Var;

struct EncoderDims {
  int d_w = 50;
  int d_p = 5;
  int d_c = 230;
  int window = 3;
  int max_dist = 30;

  int in_width() const { return d_w + 2 * d_p; }
  // One row per clipped distance in [-max_dist, max_dist] plus one spare
  // row for the out-of-range/PAD bucket.
  int pos_rows() const { return 2 * max_dist + 2; }
};

struct EmbeddingTables {
  Matrix word_table;  // |vocab| x d_w
  Matrix pos_head;    // pos_rows x d_p
  Matrix pos_tail;    // pos_rows x d_p
};

struct ConvParams {
  Matrix kernel;  // d_c x (window * in_width)
  Matrix bias;    // 1 x d_c
};

// Relative distance clipped to [-max_dist, max_dist], shifted to a table
// row in [0, 2*max_dist].
int distance_index(int offset, int max_dist);

std::vector<int> token_ids(const SentenceRecord& record, const Vocabulary& vocab);

// Row k = [word embedding ; head position embedding ; tail position
// embedding] -> l x (d_w + 2*d_p).
Var word_repr(Tape& tape, const SentenceRecord& record, const Vocabulary& vocab,
              Var word_table, Var pos_head, Var pos_tail, const EncoderDims& dims);

// Convolution over the zero-padded word matrix, piecewise max pooling over
// the three segments delimited by the entity positions, then tanh
// -> 1 x 3*d_c. With entity token indices p1 < p2 (swapped if needed) the
// segments over the feature map are [0..p1], [p1+1..p2], [p2+1..l-1]; an
// empty segment pools to zero before the tanh.
Var pcnn_encode(Tape& tape, Var words, int head_pos, int tail_pos, Var kernel, Var bias);

// Same convolution with a single global max pool -> 1 x d_c.
Var cnn_encode(Tape& tape, Var words, Var kernel, Var bias);

// Forward-only conveniences used by tests and tooling.
Matrix encode_sentence_pcnn(const SentenceRecord& record, const Vocabulary& vocab,
                            const EmbeddingTables& tables, const ConvParams& conv,
                            const EncoderDims& dims);

// Loads whitespace-separated text embeddings ("word v1 .. v_dw" per line)
// into the word table for every word present in the vocabulary. Returns the
// number of vocabulary rows filled.
int load_pretrained_embeddings(const std::string& path, const Vocabulary& vocab,
                               Matrix& word_table);

}  // namespace relex::encoder
