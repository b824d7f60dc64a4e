#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "relex/rng.hpp"

namespace relex::num {

// Dense row-major matrix of doubles. All model math runs at 64-bit
// precision; desk-scale sizes make naive kernels sufficient.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0);
  Matrix(int rows, int cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(int n);
  static Matrix uniform(int rows, int cols, double lo, double hi, Rng& rng);
  // Glorot-style uniform init with limit sqrt(6 / (fan_in + fan_out)).
  static Matrix glorot(int rows, int cols, Rng& rng);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  std::string shape_str() const;

  double l2_norm_squared() const;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// out += a * b, plus transposed variants. Shapes are validated.
void addmm_nn(Matrix& out, const Matrix& a, const Matrix& b);
void addmm_nt(Matrix& out, const Matrix& a, const Matrix& b);  // out += a * b^T
void addmm_tn(Matrix& out, const Matrix& a, const Matrix& b);  // out += a^T * b

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transposed(const Matrix& a);

// Numerically stable softmax (max subtraction). Empty input is a contract
// violation. Output entries lie in (0, 1] and sum to 1 within 1e-12.
std::vector<double> softmax(const std::vector<double>& v);

}  // namespace relex::num
