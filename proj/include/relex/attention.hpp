#pragma once

#include <span>

#include "relex/tape.hpp"

namespace relex::attn {

using num::Matrix;
using num::Tape;
using num::Var;

struct IntraBagResult {
  Var bag_repr;  // B: h x rep_dim, row k conditioned on relation k
  Var alpha;     // h x m attention weights, rows sum to 1
};

// Relation-aware intra-bag attention: every relation embedding acts as a
// query. e[k][j] = r_k . s_j, alpha rows are softmax over sentences,
// B row k = sum_j alpha[k][j] s_j.
IntraBagResult intra_bag_ra(Tape& tape, Var sentence_reprs, Var relation_embedding);

// Baseline intra-bag attention at training time: only the labeled
// relation's embedding queries the sentences and every row of B carries the
// same weighted sum. At test time the baseline decodes exactly like the
// relation-aware variant, so callers use intra_bag_ra there.
IntraBagResult intra_bag_bl_train(Tape& tape, Var sentence_reprs, Var relation_embedding,
                                  int label);

struct InterBagResult {
  Var group_repr;  // G: h x rep_dim
  Var beta;        // n x h, columns sum to 1
  Var gamma;       // n x h similarity scores
};

// Similarity-based inter-bag attention over unit-normalized bag
// representations: gamma[i][k] = sum_{i' != i} bnorm_i_k . bnorm_i'_k, beta
// columns are softmax over bags, G row k = sum_i beta[i][k] bnorm_i_k.
// Inputs here are already normalized (see inter_bag).
InterBagResult inter_bag_normalized(Tape& tape, std::span<const Var> normalized_bags);

// Normalizes each bag representation's rows to unit length first, as the
// attention scores require; rows with near-zero norm are left untouched.
InterBagResult inter_bag(Tape& tape, std::span<const Var> bag_reprs);

// Uniform-weight fallback used when inter-bag attention is disabled:
// G = (1/n) sum_i bnorm_i. For n = 1 this is bitwise identical to
// inter_bag on the same input.
Var uniform_group_repr(Tape& tape, std::span<const Var> normalized_bags);

// o_k = r_k . g_k + d_k over the diagonal pairing of relation and group
// rows -> 1 x h logits.
Var group_logits(Tape& tape, Var group_repr, Var relation_embedding, Var relation_bias);

// Softmax of the logits -> 1 x h probabilities.
Var score_group(Tape& tape, Var group_repr, Var relation_embedding, Var relation_bias);

}  // namespace relex::attn
