#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "relex/matrix.hpp"

namespace relex::num {

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid for the tape that
// created it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode differentiation tape over dense matrices.
//
// Nodes are recorded in creation order, which is a topological order of the
// dependency graph (an operation can only reference previously created
// vars). backward() runs a single reverse sweep from the loss node, visiting
// each node exactly once and accumulating adjoints into its operands, so
// gradients are deterministic: identical inputs yield bitwise-identical
// gradients within one build.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  // Leaves. Parameters are recorded with requires_grad = true; constants
  // (dropout masks, fixed weight vectors) with false so the sweep skips them.
  Var leaf(Matrix value, bool requires_grad = false);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  // m (R x C) + row (1 x C) broadcast over the R rows.
  Var add_rowvec(Var m, Var row);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double c);
  // Row k of m scaled by col(k, 0); col is (R x 1).
  Var scale_rows(Var m, Var col);
  Var tanh(Var a);
  Var transpose(Var a);
  // Softmax independently over each row (max-subtracted).
  Var softmax_rows(Var a);
  // Each row divided by its L2 norm; rows with norm < 1e-12 pass through
  // unchanged so degenerate representations never produce NaN.
  Var normalize_rows(Var a);
  Var concat_rows(std::span<const Var> parts);
  Var concat_cols(std::span<const Var> parts);
  // out(i, :) = table(indices[i], :). Repeated indices accumulate in the
  // scatter-add backward, which is what embedding lookups need.
  Var gather_rows(Var table, std::vector<int> indices);
  // im2col for a stride-1, zero-padded 1-D convolution over rows:
  // out(r, w*C + c) = m(r + w - pad, c) with pad = (window-1)/2, zeros
  // outside. window must be odd.
  Var unfold_window(Var m, int window);
  // Piecewise max pooling over rows with segments [0..p1], [p1+1..p2],
  // [p2+1..R-1] (0 <= p1 < p2 <= R-1). Result is 1 x 3C; an empty segment
  // pools to zero.
  Var piecewise_max_rows(Var m, int p1, int p2);
  // Global max over rows -> 1 x C.
  Var max_rows(Var m);
  // Sum across each row -> R x 1.
  Var row_sums(Var m);
  Var sum_all(Var m);  // -> 1 x 1
  // Softmax cross-entropy of a 1 x h logit row against a target index,
  // computed in log-sum-exp form -> 1 x 1.
  Var cross_entropy_logits(Var logits, int target);

  // References stay valid while the tape lives: node storage never
  // relocates on growth.
  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar (1 x 1) node. Resets previous adjoints.
  void backward(Var loss);
  // Adjoint of a node; valid after backward(). Zero matrix for nodes the
  // loss does not depend on.
  const Matrix& grad(Var v) const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool touched = false;  // set once an adjoint lands on the node
    std::function<void(Tape&)> backprop;
  };

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&)> backprop);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check(Var v) const;

  std::deque<Node> nodes_;
};

}  // namespace relex::num
