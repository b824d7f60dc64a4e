#include "relex/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "relex/errors.hpp"

namespace relex::num {

namespace {
constexpr double kNormEps = 1e-12;
}

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = requires_grad ? std::move(backprop) : nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw ContractError("invalid tape var");
  }
}

Tape::Node& Tape::node(Var v) { check(v); return nodes_[v.id]; }
const Tape::Node& Tape::node(Var v) const { check(v); return nodes_[v.id]; }

const Matrix& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const Matrix& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.requires_grad) throw ContractError("grad() on a node without requires_grad");
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    throw ContractError("grad() before backward()");
  }
  return n.grad;
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  if (!value.all_finite()) throw ContractError("leaf value contains non-finite entries");
  return push(std::move(value), requires_grad, nullptr);
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul shape mismatch: " + av.shape_str() + " * " + bv.shape_str());
  }
  Matrix out(av.rows(), bv.cols());
  addmm_nn(out, av, bv);
  bool rg = node(a).requires_grad || node(b).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [a, b, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& na = t.nodes_[a.id];
    Node& nb = t.nodes_[b.id];
    if (na.requires_grad) { na.touched = true; addmm_nt(na.grad, g, nb.value); }
    if (nb.requires_grad) { nb.touched = true; addmm_tn(nb.grad, na.value, g); }
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (!av.same_shape(bv)) {
    throw ShapeError("add shape mismatch: " + av.shape_str() + " vs " + bv.shape_str());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += bv.data()[i];
  bool rg = node(a).requires_grad || node(b).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [a, b, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& na = t.nodes_[a.id];
    Node& nb = t.nodes_[b.id];
    if (na.requires_grad) {
      na.touched = true;
      for (std::size_t i = 0; i < g.size(); ++i) na.grad.data()[i] += g.data()[i];
    }
    if (nb.requires_grad) {
      nb.touched = true;
      for (std::size_t i = 0; i < g.size(); ++i) nb.grad.data()[i] += g.data()[i];
    }
  });
}

Var Tape::sub(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (!av.same_shape(bv)) {
    throw ShapeError("sub shape mismatch: " + av.shape_str() + " vs " + bv.shape_str());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= bv.data()[i];
  bool rg = node(a).requires_grad || node(b).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [a, b, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& na = t.nodes_[a.id];
    Node& nb = t.nodes_[b.id];
    if (na.requires_grad) {
      na.touched = true;
      for (std::size_t i = 0; i < g.size(); ++i) na.grad.data()[i] += g.data()[i];
    }
    if (nb.requires_grad) {
      nb.touched = true;
      for (std::size_t i = 0; i < g.size(); ++i) nb.grad.data()[i] -= g.data()[i];
    }
  });
}

Var Tape::add_rowvec(Var m, Var row) {
  const Matrix& mv = node(m).value;
  const Matrix& rv = node(row).value;
  if (rv.rows() != 1 || rv.cols() != mv.cols()) {
    throw ShapeError("add_rowvec shape mismatch: " + mv.shape_str() + " + " + rv.shape_str());
  }
  Matrix out = mv;
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) += rv(0, c);
  bool rg = node(m).requires_grad || node(row).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [m, row, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& nm = t.nodes_[m.id];
    Node& nr = t.nodes_[row.id];
    if (nm.requires_grad) {
      nm.touched = true;
      for (std::size_t i = 0; i < g.size(); ++i) nm.grad.data()[i] += g.data()[i];
    }
    if (nr.requires_grad) {
      nr.touched = true;
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) nr.grad(0, c) += g(r, c);
    }
  });
}

Var Tape::hadamard(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  if (!av.same_shape(bv)) {
    throw ShapeError("hadamard shape mismatch: " + av.shape_str() + " vs " + bv.shape_str());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= bv.data()[i];
  bool rg = node(a).requires_grad || node(b).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [a, b, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& na = t.nodes_[a.id];
    Node& nb = t.nodes_[b.id];
    if (na.requires_grad) {
      na.touched = true;
      for (std::size_t i = 0; i < g.size(); ++i)
        na.grad.data()[i] += g.data()[i] * nb.value.data()[i];
    }
    if (nb.requires_grad) {
      nb.touched = true;
      for (std::size_t i = 0; i < g.size(); ++i)
        nb.grad.data()[i] += g.data()[i] * na.value.data()[i];
    }
  });
}

Var Tape::scale(Var a, double c) {
  if (!std::isfinite(c)) throw ContractError("scale by non-finite constant");
  Matrix out = node(a).value;
  for (auto& x : out.data()) x *= c;
  bool rg = node(a).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [a, c, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& na = t.nodes_[a.id];
    if (na.requires_grad) {
      na.touched = true;
      for (std::size_t i = 0; i < g.size(); ++i) na.grad.data()[i] += c * g.data()[i];
    }
  });
}

Var Tape::scale_rows(Var m, Var col) {
  const Matrix& mv = node(m).value;
  const Matrix& cv = node(col).value;
  if (cv.cols() != 1 || cv.rows() != mv.rows()) {
    throw ShapeError("scale_rows shape mismatch: " + mv.shape_str() + " by " + cv.shape_str());
  }
  Matrix out = mv;
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) *= cv(r, 0);
  bool rg = node(m).requires_grad || node(col).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [m, col, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& nm = t.nodes_[m.id];
    Node& nc = t.nodes_[col.id];
    if (nm.requires_grad) {
      nm.touched = true;
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) nm.grad(r, c) += g(r, c) * nc.value(r, 0);
    }
    if (nc.requires_grad) {
      nc.touched = true;
      for (int r = 0; r < g.rows(); ++r) {
        double s = 0.0;
        for (int c = 0; c < g.cols(); ++c) s += g(r, c) * nm.value(r, c);
        nc.grad(r, 0) += s;
      }
    }
  });
}

Var Tape::tanh(Var a) {
  Matrix out = node(a).value;
  for (auto& x : out.data()) x = std::tanh(x);
  bool rg = node(a).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [a, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value;
    Node& na = t.nodes_[a.id];
    if (na.requires_grad) {
      na.touched = true;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double yi = y.data()[i];
        na.grad.data()[i] += g.data()[i] * (1.0 - yi * yi);
      }
    }
  });
}

Var Tape::transpose(Var a) {
  Matrix out = transposed(node(a).value);
  bool rg = node(a).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [a, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& na = t.nodes_[a.id];
    if (na.requires_grad) {
      na.touched = true;
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c) na.grad(c, r) += g(r, c);
    }
  });
}

Var Tape::softmax_rows(Var a) {
  const Matrix& av = node(a).value;
  if (av.cols() == 0 || av.rows() == 0) throw ContractError("softmax_rows on empty matrix");
  Matrix out(av.rows(), av.cols());
  std::vector<double> buf(av.cols());
  for (int r = 0; r < av.rows(); ++r) {
    for (int c = 0; c < av.cols(); ++c) buf[c] = av(r, c);
    std::vector<double> sm = softmax(buf);
    for (int c = 0; c < av.cols(); ++c) out(r, c) = sm[c];
  }
  bool rg = node(a).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [a, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value;
    Node& na = t.nodes_[a.id];
    if (!na.requires_grad) return;
    na.touched = true;
    for (int r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (int c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (int c = 0; c < g.cols(); ++c) na.grad(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var Tape::normalize_rows(Var a) {
  const Matrix& av = node(a).value;
  Matrix out = av;
  std::vector<double> norms(av.rows());
  for (int r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < av.cols(); ++c) s += av(r, c) * av(r, c);
    double norm = std::sqrt(s);
    norms[r] = norm;
    if (norm >= kNormEps) {
      for (int c = 0; c < av.cols(); ++c) out(r, c) /= norm;
    }
  }
  bool rg = node(a).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [a, self, norms = std::move(norms)](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value;
    Node& na = t.nodes_[a.id];
    if (!na.requires_grad) return;
    na.touched = true;
    for (int r = 0; r < g.rows(); ++r) {
      if (norms[r] < kNormEps) {
        // Pass-through branch: the op was the identity on this row.
        for (int c = 0; c < g.cols(); ++c) na.grad(r, c) += g(r, c);
        continue;
      }
      double dot = 0.0;
      for (int c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (int c = 0; c < g.cols(); ++c) {
        na.grad(r, c) += (g(r, c) - dot * y(r, c)) / norms[r];
      }
    }
  });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows of zero parts");
  int cols = node(parts[0]).value.cols();
  int rows = 0;
  bool rg = false;
  for (Var p : parts) {
    const Matrix& pv = node(p).value;
    if (pv.cols() != cols) throw ShapeError("concat_rows column mismatch");
    rows += pv.rows();
    rg = rg || node(p).requires_grad;
  }
  Matrix out(rows, cols);
  int at = 0;
  for (Var p : parts) {
    const Matrix& pv = node(p).value;
    for (int r = 0; r < pv.rows(); ++r)
      for (int c = 0; c < cols; ++c) out(at + r, c) = pv(r, c);
    at += pv.rows();
  }
  std::vector<Var> own(parts.begin(), parts.end());
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [own = std::move(own), self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    int at = 0;
    for (Var p : own) {
      Node& np = t.nodes_[p.id];
      int pr = np.value.rows();
      if (np.requires_grad) {
        np.touched = true;
        for (int r = 0; r < pr; ++r)
          for (int c = 0; c < g.cols(); ++c) np.grad(r, c) += g(at + r, c);
      }
      at += pr;
    }
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols of zero parts");
  int rows = node(parts[0]).value.rows();
  int cols = 0;
  bool rg = false;
  for (Var p : parts) {
    const Matrix& pv = node(p).value;
    if (pv.rows() != rows) throw ShapeError("concat_cols row mismatch");
    cols += pv.cols();
    rg = rg || node(p).requires_grad;
  }
  Matrix out(rows, cols);
  int at = 0;
  for (Var p : parts) {
    const Matrix& pv = node(p).value;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < pv.cols(); ++c) out(r, at + c) = pv(r, c);
    at += pv.cols();
  }
  std::vector<Var> own(parts.begin(), parts.end());
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [own = std::move(own), self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    int at = 0;
    for (Var p : own) {
      Node& np = t.nodes_[p.id];
      int pc = np.value.cols();
      if (np.requires_grad) {
        np.touched = true;
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < pc; ++c) np.grad(r, c) += g(r, at + c);
      }
      at += pc;
    }
  });
}

Var Tape::gather_rows(Var table, std::vector<int> indices) {
  const Matrix& tv = node(table).value;
  for (int i : indices) {
    if (i < 0 || i >= tv.rows()) throw ContractError("gather_rows index out of range");
  }
  Matrix out(static_cast<int>(indices.size()), tv.cols());
  for (std::size_t r = 0; r < indices.size(); ++r)
    for (int c = 0; c < tv.cols(); ++c) out(static_cast<int>(r), c) = tv(indices[r], c);
  bool rg = node(table).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [table, self, idx = std::move(indices)](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& nt = t.nodes_[table.id];
    if (!nt.requires_grad) return;
    nt.touched = true;
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < g.cols(); ++c) nt.grad(idx[r], c) += g(static_cast<int>(r), c);
  });
}

Var Tape::unfold_window(Var m, int window) {
  if (window < 1 || window % 2 == 0) throw ContractError("unfold_window requires odd window");
  const Matrix& mv = node(m).value;
  const int rows = mv.rows(), cols = mv.cols(), pad = (window - 1) / 2;
  Matrix out(rows, window * cols);
  for (int r = 0; r < rows; ++r) {
    for (int w = 0; w < window; ++w) {
      int src = r + w - pad;
      if (src < 0 || src >= rows) continue;  // zero padding
      for (int c = 0; c < cols; ++c) out(r, w * cols + c) = mv(src, c);
    }
  }
  bool rg = node(m).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [m, self, window, pad, cols](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& nm = t.nodes_[m.id];
    if (!nm.requires_grad) return;
    nm.touched = true;
    int rows = nm.value.rows();
    for (int r = 0; r < rows; ++r) {
      for (int w = 0; w < window; ++w) {
        int src = r + w - pad;
        if (src < 0 || src >= rows) continue;
        for (int c = 0; c < cols; ++c) nm.grad(src, c) += g(r, w * cols + c);
      }
    }
  });
}

Var Tape::piecewise_max_rows(Var m, int p1, int p2) {
  const Matrix& mv = node(m).value;
  const int rows = mv.rows(), cols = mv.cols();
  if (!(0 <= p1 && p1 < p2 && p2 <= rows - 1)) {
    throw ContractError("piecewise_max_rows: segment positions out of range");
  }
  // Segment row ranges, inclusive start / exclusive end.
  const int seg_begin[3] = {0, p1 + 1, p2 + 1};
  const int seg_end[3] = {p1 + 1, p2 + 1, rows};
  Matrix out(1, 3 * cols);
  std::vector<int> argmax(static_cast<std::size_t>(3) * cols, -1);
  for (int s = 0; s < 3; ++s) {
    for (int c = 0; c < cols; ++c) {
      int best = -1;
      double bv = 0.0;
      for (int r = seg_begin[s]; r < seg_end[s]; ++r) {
        if (best < 0 || mv(r, c) > bv) { best = r; bv = mv(r, c); }
      }
      if (best >= 0) {
        out(0, s * cols + c) = bv;
        argmax[static_cast<std::size_t>(s) * cols + c] = best;
      }
      // Empty segment: output stays 0, argmax stays -1.
    }
  }
  bool rg = node(m).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [m, self, cols, argmax = std::move(argmax)](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& nm = t.nodes_[m.id];
    if (!nm.requires_grad) return;
    nm.touched = true;
    for (int s = 0; s < 3; ++s) {
      for (int c = 0; c < cols; ++c) {
        int r = argmax[static_cast<std::size_t>(s) * cols + c];
        if (r >= 0) nm.grad(r, c) += g(0, s * cols + c);
      }
    }
  });
}

Var Tape::max_rows(Var m) {
  const Matrix& mv = node(m).value;
  if (mv.rows() == 0) throw ContractError("max_rows of empty matrix");
  const int rows = mv.rows(), cols = mv.cols();
  Matrix out(1, cols);
  std::vector<int> argmax(cols, 0);
  for (int c = 0; c < cols; ++c) {
    int best = 0;
    for (int r = 1; r < rows; ++r) {
      if (mv(r, c) > mv(best, c)) best = r;
    }
    out(0, c) = mv(best, c);
    argmax[c] = best;
  }
  bool rg = node(m).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [m, self, argmax = std::move(argmax)](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& nm = t.nodes_[m.id];
    if (!nm.requires_grad) return;
    nm.touched = true;
    for (int c = 0; c < g.cols(); ++c) nm.grad(argmax[c], c) += g(0, c);
  });
}

Var Tape::row_sums(Var m) {
  const Matrix& mv = node(m).value;
  Matrix out(mv.rows(), 1);
  for (int r = 0; r < mv.rows(); ++r) {
    double s = 0.0;
    for (int c = 0; c < mv.cols(); ++c) s += mv(r, c);
    out(r, 0) = s;
  }
  bool rg = node(m).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [m, self](Tape& t) {
    const Matrix& g = t.nodes_[self].grad;
    Node& nm = t.nodes_[m.id];
    if (!nm.requires_grad) return;
    nm.touched = true;
    for (int r = 0; r < nm.value.rows(); ++r)
      for (int c = 0; c < nm.value.cols(); ++c) nm.grad(r, c) += g(r, 0);
  });
}

Var Tape::sum_all(Var m) {
  const Matrix& mv = node(m).value;
  double s = 0.0;
  for (double x : mv.data()) s += x;
  Matrix out(1, 1);
  out(0, 0) = s;
  bool rg = node(m).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [m, self](Tape& t) {
    double g = t.nodes_[self].grad(0, 0);
    Node& nm = t.nodes_[m.id];
    if (!nm.requires_grad) return;
    nm.touched = true;
    for (auto& x : nm.grad.data()) x += g;
  });
}

Var Tape::cross_entropy_logits(Var logits, int target) {
  const Matrix& lv = node(logits).value;
  if (lv.rows() != 1 || lv.cols() < 1) {
    throw ShapeError("cross_entropy_logits expects a 1 x h logit row, got " + lv.shape_str());
  }
  if (target < 0 || target >= lv.cols()) {
    throw ContractError("cross_entropy_logits target out of range");
  }
  // Log-sum-exp form so the loss stays finite even when probabilities
  // underflow.
  double mx = lv(0, 0);
  for (int c = 1; c < lv.cols(); ++c) mx = std::max(mx, lv(0, c));
  double sum = 0.0;
  for (int c = 0; c < lv.cols(); ++c) sum += std::exp(lv(0, c) - mx);
  double lse = mx + std::log(sum);
  std::vector<double> probs(lv.cols());
  for (int c = 0; c < lv.cols(); ++c) probs[c] = std::exp(lv(0, c) - mx) / sum;
  Matrix out(1, 1);
  out(0, 0) = lse - lv(0, target);
  bool rg = node(logits).requires_grad;
  int self = static_cast<int>(nodes_.size());
  return push(std::move(out), rg, [logits, self, target, probs = std::move(probs)](Tape& t) {
    double g = t.nodes_[self].grad(0, 0);
    Node& nl = t.nodes_[logits.id];
    if (!nl.requires_grad) return;
    nl.touched = true;
    for (int c = 0; c < nl.value.cols(); ++c) {
      nl.grad(0, c) += g * (probs[c] - (c == target ? 1.0 : 0.0));
    }
  });
}

void Tape::backward(Var loss) {
  const Node& ln = node(loss);
  if (ln.value.rows() != 1 || ln.value.cols() != 1) {
    throw ContractError("backward: loss must be a scalar (1x1) node, got " +
                        ln.value.shape_str());
  }
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad = Matrix(n.value.rows(), n.value.cols());
    n.touched = false;
  }
  Node& start = nodes_[loss.id];
  if (!start.requires_grad) return;  // loss independent of all parameters
  start.grad(0, 0) = 1.0;
  start.touched = true;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.touched || !n.backprop) continue;
    n.backprop(*this);
  }
}

}  // namespace relex::num
