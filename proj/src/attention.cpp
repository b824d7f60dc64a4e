#include "relex/attention.hpp"

#include <vector>

#include "relex/errors.hpp"

namespace relex::attn {

IntraBagResult intra_bag_ra(Tape& tape, Var sentence_reprs, Var relation_embedding) {
  const Matrix& s = tape.value(sentence_reprs);
  if (s.rows() < 1) throw ContractError("intra_bag_ra: empty bag");
  Var scores = tape.matmul(relation_embedding, tape.transpose(sentence_reprs));  // h x m
  Var alpha = tape.softmax_rows(scores);
  Var bag = tape.matmul(alpha, sentence_reprs);  // h x rep_dim
  return {bag, alpha};
}

IntraBagResult intra_bag_bl_train(Tape& tape, Var sentence_reprs, Var relation_embedding,
                                  int label) {
  const Matrix& r = tape.value(relation_embedding);
  if (label < 0 || label >= r.rows()) throw ContractError("intra_bag_bl_train: bad label");
  const int h = r.rows();
  Var query = tape.gather_rows(relation_embedding, {label});            // 1 x rep_dim
  Var scores = tape.matmul(query, tape.transpose(sentence_reprs));      // 1 x m
  Var alpha_row = tape.softmax_rows(scores);
  Var bag_row = tape.matmul(alpha_row, sentence_reprs);                 // 1 x rep_dim
  // Every relation row shares the single label-conditioned representation.
  Var ones = tape.leaf(Matrix(h, 1, 1.0), false);
  Var bag = tape.matmul(ones, bag_row);
  Var alpha = tape.matmul(ones, alpha_row);
  return {bag, alpha};
}

InterBagResult inter_bag_normalized(Tape& tape, std::span<const Var> normalized_bags) {
  const int n = static_cast<int>(normalized_bags.size());
  if (n < 1) throw ContractError("inter_bag: empty group");
  const Matrix& first = tape.value(normalized_bags[0]);
  for (Var b : normalized_bags) {
    if (!tape.value(b).same_shape(first)) {
      throw ContractError("inter_bag: bag representation shape mismatch");
    }
  }
  // gamma_i = bnorm_i . (sum_j bnorm_j) - bnorm_i . bnorm_i, which equals
  // the pairwise sum over j != i.
  Var total = normalized_bags[0];
  for (int i = 1; i < n; ++i) total = tape.add(total, normalized_bags[i]);
  std::vector<Var> gamma_rows;
  gamma_rows.reserve(n);
  for (int i = 0; i < n; ++i) {
    Var with_all = tape.row_sums(tape.hadamard(normalized_bags[i], total));             // h x 1
    Var with_self = tape.row_sums(tape.hadamard(normalized_bags[i], normalized_bags[i]));
    gamma_rows.push_back(tape.transpose(tape.sub(with_all, with_self)));                // 1 x h
  }
  Var gamma = tape.concat_rows(gamma_rows);  // n x h
  // Softmax over bags for each relation column.
  Var beta = tape.transpose(tape.softmax_rows(tape.transpose(gamma)));  // n x h
  Var group;
  for (int i = 0; i < n; ++i) {
    Var beta_col = tape.transpose(tape.gather_rows(beta, {i}));  // h x 1
    Var weighted = tape.scale_rows(normalized_bags[i], beta_col);
    group = (i == 0) ? weighted : tape.add(group, weighted);
  }
  return {group, beta, gamma};
}

InterBagResult inter_bag(Tape& tape, std::span<const Var> bag_reprs) {
  std::vector<Var> normalized;
  normalized.reserve(bag_reprs.size());
  for (Var b : bag_reprs) normalized.push_back(tape.normalize_rows(b));
  return inter_bag_normalized(tape, normalized);
}

Var uniform_group_repr(Tape& tape, std::span<const Var> normalized_bags) {
  const int n = static_cast<int>(normalized_bags.size());
  if (n < 1) throw ContractError("uniform_group_repr: empty group");
  Var group;
  for (int i = 0; i < n; ++i) {
    Var scaled = tape.scale(normalized_bags[i], 1.0 / n);
    group = (i == 0) ? scaled : tape.add(group, scaled);
  }
  return group;
}

Var group_logits(Tape& tape, Var group_repr, Var relation_embedding, Var relation_bias) {
  const Matrix& g = tape.value(group_repr);
  const Matrix& r = tape.value(relation_embedding);
  if (!g.same_shape(r)) {
    throw ShapeError("group_logits: G " + g.shape_str() + " vs R " + r.shape_str());
  }
  Var diag = tape.row_sums(tape.hadamard(relation_embedding, group_repr));  // h x 1
  return tape.add(tape.transpose(diag), relation_bias);                     // 1 x h
}

Var score_group(Tape& tape, Var group_repr, Var relation_embedding, Var relation_bias) {
  return tape.softmax_rows(group_logits(tape, group_repr, relation_embedding, relation_bias));
}

}  // namespace relex::attn
