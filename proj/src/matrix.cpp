#include "relex/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "relex/errors.hpp"

namespace relex::num {

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
  if (rows < 0 || cols < 0) throw ShapeError("negative matrix dimension");
}

Matrix::Matrix(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("matrix data length does not match " + shape_str());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = static_cast<int>(rows.size());
  cols_ = rows_ > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  data_.reserve(static_cast<std::size_t>(rows_) * cols_);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != cols_) throw ShapeError("ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::uniform(int rows, int cols, double lo, double hi, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& x : m.data()) x = rng.uniform(lo, hi);
  return m;
}

Matrix Matrix::glorot(int rows, int cols, Rng& rng) {
  double limit = std::sqrt(6.0 / (rows + cols));
  return uniform(rows, cols, -limit, limit, rng);
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

double Matrix::l2_norm_squared() const {
  double s = 0.0;
  for (double x : data_) s += x * x;
  return s;
}

void addmm_nn(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_str() + " * " + b.shape_str() +
                     " -> " + out.shape_str());
  }
  const int n = a.rows(), k = a.cols(), m = b.cols();
  for (int i = 0; i < n; ++i) {
    const double* arow = a.data().data() + static_cast<std::size_t>(i) * k;
    double* orow = out.data().data() + static_cast<std::size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data().data() + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

void addmm_nt(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) {
    throw ShapeError("matmul_nt shape mismatch: " + a.shape_str() + " * " + b.shape_str() +
                     "^T -> " + out.shape_str());
  }
  const int n = a.rows(), k = a.cols(), m = b.rows();
  for (int i = 0; i < n; ++i) {
    const double* arow = a.data().data() + static_cast<std::size_t>(i) * k;
    double* orow = out.data().data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = b.data().data() + static_cast<std::size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      orow[j] += s;
    }
  }
}

void addmm_tn(Matrix& out, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw ShapeError("matmul_tn shape mismatch: " + a.shape_str() + "^T * " + b.shape_str() +
                     " -> " + out.shape_str());
  }
  const int n = a.cols(), k = a.rows(), m = b.cols();
  for (int p = 0; p < k; ++p) {
    const double* arow = a.data().data() + static_cast<std::size_t>(p) * n;
    const double* brow = b.data().data() + static_cast<std::size_t>(p) * m;
    for (int i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out.data().data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_str() + " * " + b.shape_str());
  }
  Matrix out(a.rows(), b.cols());
  addmm_nn(out, a, b);
  return out;
}

Matrix transposed(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

std::vector<double> softmax(const std::vector<double>& v) {
  if (v.empty()) throw ContractError("softmax of empty vector");
  double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) throw ContractError("softmax input not finite");
  std::vector<double> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (auto& x : out) x /= sum;
  return out;
}

}  // namespace relex::num
