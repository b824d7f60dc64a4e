#include <cmath>
#include <vector>

#include <doctest.h>

#include "relex/errors.hpp"
#include "relex/grad_check.hpp"
#include "relex/matrix.hpp"
#include "relex/rng.hpp"
#include "relex/tape.hpp"

using namespace relex;
using num::Matrix;
using num::NamedMatrix;
using num::Tape;
using num::Var;

namespace {

// Independent triple-loop product used to cross-check matmul results.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j)
      for (int k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

void check_close(const Matrix& got, const Matrix& want, double tol = 1e-12) {
  REQUIRE(got.rows() == want.rows());
  REQUIRE(got.cols() == want.cols());
  for (int r = 0; r < got.rows(); ++r)
    for (int c = 0; c < got.cols(); ++c) CHECK(got(r, c) == doctest::Approx(want(r, c)).epsilon(tol));
}

}  // namespace

TEST_CASE("matmul basics") {
  CHECK(num::matmul(Matrix{{2.0}}, Matrix{{3.0}})(0, 0) == 6.0);

  Rng rng(7);
  Matrix m = Matrix::uniform(3, 4, -1.0, 1.0, rng);
  check_close(num::matmul(Matrix::identity(3), m), m);

  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{5, 6}, {7, 8}};
  Matrix want{{19, 22}, {43, 50}};
  Matrix got = num::matmul(a, b);
  check_close(got, want);
  check_close(got, matmul_oracle(a, b));

  CHECK_THROWS_AS(num::matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST_CASE("matmul matches oracle on random shapes") {
  Rng rng(11);
  for (int it = 0; it < 20; ++it) {
    int n = 1 + rng.uniform_int(5), k = 1 + rng.uniform_int(5), m = 1 + rng.uniform_int(5);
    Matrix a = Matrix::uniform(n, k, -2.0, 2.0, rng);
    Matrix b = Matrix::uniform(k, m, -2.0, 2.0, rng);
    check_close(num::matmul(a, b), matmul_oracle(a, b));
  }
}

TEST_CASE("softmax values") {
  CHECK(num::softmax({0.0}) == std::vector<double>{1.0});

  auto even = num::softmax({5.5, 5.5, 5.5});
  for (double x : even) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // Hand evaluation: exp(0) = 1, exp(ln 3) = 3, so weights 1/4 and 3/4.
  auto skewed = num::softmax({0.0, std::log(3.0)});
  CHECK(skewed[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(skewed[1] == doctest::Approx(0.75).epsilon(1e-14));
  double direct0 = std::exp(0.0) / (std::exp(0.0) + std::exp(std::log(3.0)));
  CHECK(skewed[0] == doctest::Approx(direct0).epsilon(1e-15));

  CHECK_THROWS_AS(num::softmax({}), ContractError);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(23);
  for (int it = 0; it < 1000; ++it) {
    int n = 1 + rng.uniform_int(8);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-30.0, 30.0);
    auto s = num::softmax(v);
    double sum = 0.0;
    for (double x : s) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
      sum += x;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);

    double shift = rng.uniform(-50.0, 50.0);
    std::vector<double> shifted = v;
    for (auto& x : shifted) x += shift;
    auto s2 = num::softmax(shifted);
    for (int i = 0; i < n; ++i) CHECK(s[i] == doctest::Approx(s2[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward: simple analytic cases") {
  // loss = x * x at x = 3 -> d/dx = 6
  {
    Tape tape;
    Var x = tape.leaf(Matrix{{3.0}}, true);
    Var loss = tape.hadamard(x, x);
    tape.backward(loss);
    CHECK(tape.grad(x)(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
  }
  // softmax cross-entropy of logits [0, 0] against target 0 -> [-0.5, 0.5]
  {
    Tape tape;
    Var logits = tape.leaf(Matrix{{0.0, 0.0}}, true);
    Var loss = tape.cross_entropy_logits(logits, 0);
    tape.backward(loss);
    CHECK(tape.grad(logits)(0, 0) == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(tape.grad(logits)(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  Var x = tape.leaf(Matrix{{1.0, 2.0}}, true);
  CHECK_THROWS_AS(tape.backward(x), ContractError);
}

TEST_CASE("backward is deterministic") {
  auto run = []() {
    Tape tape;
    Rng rng(99);
    Var a = tape.leaf(Matrix::uniform(4, 5, -1.0, 1.0, rng), true);
    Var b = tape.leaf(Matrix::uniform(5, 3, -1.0, 1.0, rng), true);
    Var loss = tape.sum_all(tape.tanh(tape.matmul(a, b)));
    tape.backward(loss);
    return std::make_pair(tape.grad(a).data(), tape.grad(b).data());
  };
  auto [ga1, gb1] = run();
  auto [ga2, gb2] = run();
  CHECK(ga1 == ga2);  // bitwise
  CHECK(gb1 == gb2);
}

namespace {

// Scalarizes any op output so every primitive can run through grad_check.
// Weights make the reduction non-symmetric, which catches transposed
// gradients that a plain sum would miss.
num::TapeScalarFn weighted_sum_of(std::function<Var(Tape&, const std::vector<Var>&)> op,
                                  Rng& rng) {
  double w1 = rng.uniform(0.5, 1.5), w2 = rng.uniform(-1.5, -0.5);
  return [op = std::move(op), w1, w2](Tape& tape, const std::vector<Var>& leaves) -> Var {
    Var out = op(tape, leaves);
    const Matrix& v = tape.value(out);
    Matrix weights(v.rows(), v.cols());
    for (int r = 0; r < v.rows(); ++r)
      for (int c = 0; c < v.cols(); ++c) weights(r, c) = (r + c) % 2 == 0 ? w1 : w2;
    return tape.sum_all(tape.hadamard(out, tape.leaf(weights, false)));
  };
}

}  // namespace

TEST_CASE("every primitive op matches central differences") {
  Rng rng(2024);
  auto rand_mat = [&rng](int r, int c) { return Matrix::uniform(r, c, -1.0, 1.0, rng); };

  struct Case {
    const char* name;
    std::vector<NamedMatrix> params;
    num::TapeScalarFn fn;
    double eps;
  };
  std::vector<Case> cases;

  cases.push_back({"matmul",
                   {{"a", rand_mat(3, 4)}, {"b", rand_mat(4, 2)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.matmul(v[0], v[1]);
                   }, rng),
                   1e-5});
  cases.push_back({"add",
                   {{"a", rand_mat(3, 3)}, {"b", rand_mat(3, 3)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.add(v[0], v[1]);
                   }, rng),
                   1e-5});
  cases.push_back({"sub",
                   {{"a", rand_mat(3, 3)}, {"b", rand_mat(3, 3)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.sub(v[0], v[1]);
                   }, rng),
                   1e-5});
  cases.push_back({"add_rowvec",
                   {{"m", rand_mat(4, 3)}, {"row", rand_mat(1, 3)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.add_rowvec(v[0], v[1]);
                   }, rng),
                   1e-5});
  cases.push_back({"hadamard",
                   {{"a", rand_mat(3, 4)}, {"b", rand_mat(3, 4)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.hadamard(v[0], v[1]);
                   }, rng),
                   1e-5});
  cases.push_back({"scale",
                   {{"a", rand_mat(3, 4)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.scale(v[0], -1.7);
                   }, rng),
                   1e-5});
  cases.push_back({"scale_rows",
                   {{"m", rand_mat(4, 3)}, {"col", rand_mat(4, 1)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.scale_rows(v[0], v[1]);
                   }, rng),
                   1e-5});
  cases.push_back({"tanh",
                   {{"a", rand_mat(3, 4)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.tanh(v[0]);
                   }, rng),
                   1e-5});
  cases.push_back({"transpose",
                   {{"a", rand_mat(3, 4)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.transpose(v[0]);
                   }, rng),
                   1e-5});
  cases.push_back({"softmax_rows",
                   {{"a", rand_mat(3, 5)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.softmax_rows(v[0]);
                   }, rng),
                   1e-5});
  cases.push_back({"normalize_rows",
                   {{"a", rand_mat(3, 6)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.normalize_rows(v[0]);
                   }, rng),
                   1e-5});
  cases.push_back({"concat_rows",
                   {{"a", rand_mat(2, 4)}, {"b", rand_mat(3, 4)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.concat_rows(v);
                   }, rng),
                   1e-5});
  cases.push_back({"concat_cols",
                   {{"a", rand_mat(3, 2)}, {"b", rand_mat(3, 4)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.concat_cols(v);
                   }, rng),
                   1e-5});
  cases.push_back({"gather_rows",
                   {{"table", rand_mat(6, 3)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.gather_rows(v[0], {0, 2, 2, 5, 1});
                   }, rng),
                   1e-5});
  cases.push_back({"unfold_window",
                   {{"m", rand_mat(5, 3)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.unfold_window(v[0], 3);
                   }, rng),
                   1e-5});
  cases.push_back({"piecewise_max_rows",
                   {{"m", rand_mat(7, 4)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.piecewise_max_rows(v[0], 1, 4);
                   }, rng),
                   1e-6});
  cases.push_back({"max_rows",
                   {{"m", rand_mat(6, 4)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.max_rows(v[0]);
                   }, rng),
                   1e-6});
  cases.push_back({"row_sums",
                   {{"m", rand_mat(4, 5)}},
                   weighted_sum_of([](Tape& t, const std::vector<Var>& v) {
                     return t.row_sums(v[0]);
                   }, rng),
                   1e-5});
  cases.push_back({"cross_entropy_logits",
                   {{"logits", rand_mat(1, 6)}},
                   [](Tape& t, const std::vector<Var>& v) {
                     return t.cross_entropy_logits(v[0], 2);
                   },
                   1e-5});

  for (auto& c : cases) {
    CAPTURE(c.name);
    auto report = num::grad_check(c.fn, c.params, c.eps, 1e-6);
    INFO(report.summary());
    CHECK(report.pass);
  }
}

TEST_CASE("grad_check: quadratic form passes, corrupted gradient fails") {
  Rng rng(5);
  Matrix a = Matrix::uniform(4, 4, -1.0, 1.0, rng);
  Matrix x = Matrix::uniform(4, 1, -1.0, 1.0, rng);
  num::TapeScalarFn quad = [](Tape& t, const std::vector<Var>& v) {
    return t.matmul(t.transpose(v[1]), t.matmul(v[0], v[1]));  // x^T A x
  };
  std::vector<NamedMatrix> params = {{"a", a}, {"x", x}};
  auto report = num::grad_check(quad, params, 1e-5, 1e-6);
  INFO(report.summary());
  CHECK(report.pass);

  // Same function, but one analytic entry deliberately off by +0.1.
  std::vector<Matrix> analytic = num::analytic_gradients(quad, {a, x});
  analytic[1](2, 0) += 0.1;
  num::ScalarFn f = [&quad](const std::vector<Matrix>& p) {
    return num::evaluate_scalar(quad, p);
  };
  auto corrupted = num::compare_gradients(f, params, analytic, 1e-5, 1e-6);
  CHECK_FALSE(corrupted.pass);
}

TEST_CASE("grad_check contract violations") {
  num::TapeScalarFn fn = [](Tape& t, const std::vector<Var>& v) { return t.sum_all(v[0]); };
  std::vector<NamedMatrix> params = {{"a", Matrix{{1.0, 2.0}}}};
  CHECK_THROWS_AS(num::grad_check(fn, params, 0.0, 1e-6), ContractError);
  CHECK_THROWS_AS(num::grad_check(fn, params, 1e-2, 1e-6), ContractError);

  // A function that changes between calls must be rejected.
  int calls = 0;
  num::ScalarFn flaky = [&calls](const std::vector<Matrix>&) {
    return static_cast<double>(calls++);
  };
  std::vector<Matrix> analytic = {Matrix(1, 2)};
  CHECK_THROWS_AS(num::compare_gradients(flaky, params, analytic, 1e-5, 1e-6), ContractError);
}

TEST_CASE("composed graph matches finite differences") {
  Rng rng(31);
  std::vector<NamedMatrix> params = {
      {"w1", Matrix::uniform(4, 3, -1.0, 1.0, rng)},
      {"w2", Matrix::uniform(5, 4, -1.0, 1.0, rng)},
      {"bias", Matrix::uniform(1, 5, -0.5, 0.5, rng)},
  };
  num::TapeScalarFn fn = [](Tape& t, const std::vector<Var>& v) {
    Var x = t.leaf(Matrix{{0.3, -0.2, 0.8}}, false);
    Var hidden = t.tanh(t.matmul(x, t.transpose(v[0])));           // 1 x 4
    Var logits = t.add(t.matmul(hidden, t.transpose(v[1])), v[2]); // 1 x 5
    return t.cross_entropy_logits(logits, 3);
  };
  auto report = num::grad_check(fn, params, 1e-5, 1e-6);
  INFO(report.summary());
  CHECK(report.pass);
}

TEST_CASE("leaf rejects non-finite values") {
  Tape tape;
  Matrix bad(2, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(tape.leaf(bad, false), ContractError);
}
