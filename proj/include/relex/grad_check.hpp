#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relex/tape.hpp"

namespace relex::num {

struct NamedMatrix {
  std::string name;
  Matrix value;
};

// Builds a scalar loss node from leaves that mirror `params` (same order).
using TapeScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;
// Plain evaluation of the same scalar at a parameter point.
using ScalarFn = std::function<double(const std::vector<Matrix>&)>;

struct GradCheckEntry {
  std::string param;
  int row = 0, col = 0;
  double analytic = 0.0, numeric = 0.0, rel_err = 0.0;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  GradCheckEntry worst;
  // Per-parameter maximum relative error, in parameter order.
  std::vector<GradCheckEntry> per_param;
  std::string summary() const;
};

// Relative error between analytic and central-difference gradients:
//   |a - n| / max(|a|, |n|, 0.01)
// The floor keeps finite-difference noise on near-zero entries from
// dominating while still exposing wrong gradients at the tolerances the
// contracts use (1e-6 for primitives, 1e-4 end to end).
double gradient_rel_err(double analytic, double numeric);

// Compares caller-supplied analytic gradients against central differences
// (f(p+eps) - f(p-eps)) / (2 eps) of `f` at `params`. eps must lie in
// (0, 1e-3]. f must be deterministic; it is probed twice at the base point
// and any disagreement (e.g. dropout left enabled) is a contract violation.
GradCheckReport compare_gradients(const ScalarFn& f, std::vector<NamedMatrix> params,
                                  const std::vector<Matrix>& analytic, double eps, double tol);

// Full check: analytic gradients come from a reverse sweep of `build` on a
// fresh tape, numeric ones from central differences of the same function.
GradCheckReport grad_check(const TapeScalarFn& build, std::vector<NamedMatrix> params,
                           double eps, double tol);

// Convenience: evaluate `build` at a parameter point without gradients.
double evaluate_scalar(const TapeScalarFn& build, const std::vector<Matrix>& params);
// Analytic gradients of `build` at a parameter point.
std::vector<Matrix> analytic_gradients(const TapeScalarFn& build,
                                       const std::vector<Matrix>& params);

}  // namespace relex::num
