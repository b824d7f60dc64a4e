#include "relex/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "relex/errors.hpp"

namespace relex::num {

namespace {
constexpr double kRelFloor = 1e-2;

double scalar_of(const Tape& tape, Var v) {
  const Matrix& m = tape.value(v);
  if (m.rows() != 1 || m.cols() != 1) {
    throw ContractError("grad_check function must produce a scalar, got " + m.shape_str());
  }
  return m(0, 0);
}
}  // namespace

double gradient_rel_err(double analytic, double numeric) {
  double denom = std::max({std::fabs(analytic), std::fabs(numeric), kRelFloor});
  return std::fabs(analytic - numeric) / denom;
}

std::string GradCheckReport::summary() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s, max_rel_err=%.3e at %s[%d,%d] (analytic=%.6e numeric=%.6e)",
                pass ? "PASS" : "FAIL", max_rel_err, worst.param.c_str(), worst.row, worst.col,
                worst.analytic, worst.numeric);
  return buf;
}

double evaluate_scalar(const TapeScalarFn& build, const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.leaf(p, false));
  return scalar_of(tape, build(tape, leaves));
}

std::vector<Matrix> analytic_gradients(const TapeScalarFn& build,
                                       const std::vector<Matrix>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(tape.leaf(p, true));
  Var loss = build(tape, leaves);
  scalar_of(tape, loss);
  tape.backward(loss);
  std::vector<Matrix> grads;
  grads.reserve(leaves.size());
  for (Var v : leaves) grads.push_back(tape.grad(v));
  return grads;
}

GradCheckReport compare_gradients(const ScalarFn& f, std::vector<NamedMatrix> params,
                                  const std::vector<Matrix>& analytic, double eps, double tol) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw ContractError("grad_check eps must be in (0, 1e-3]");
  if (analytic.size() != params.size()) {
    throw ContractError("grad_check: analytic gradient count mismatch");
  }
  std::vector<Matrix> point;
  point.reserve(params.size());
  for (const auto& p : params) point.push_back(p.value);

  // Determinism probe: dropout or any other per-call randomness must be off.
  double probe1 = f(point);
  double probe2 = f(point);
  if (!(probe1 == probe2)) {
    throw ContractError("grad_check requires a deterministic function (is dropout enabled?)");
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const Matrix& g = analytic[pi];
    if (!g.same_shape(params[pi].value)) {
      throw ContractError("grad_check: gradient shape mismatch for " + params[pi].name);
    }
    GradCheckEntry param_worst;
    param_worst.param = params[pi].name;
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) {
        double saved = point[pi](r, c);
        point[pi](r, c) = saved + eps;
        double fp = f(point);
        point[pi](r, c) = saved - eps;
        double fm = f(point);
        point[pi](r, c) = saved;
        double numeric = (fp - fm) / (2.0 * eps);
        double rel = gradient_rel_err(g(r, c), numeric);
        if (rel >= param_worst.rel_err) {
          param_worst = {params[pi].name, r, c, g(r, c), numeric, rel};
        }
        if (rel >= report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst = {params[pi].name, r, c, g(r, c), numeric, rel};
        }
      }
    }
    report.per_param.push_back(param_worst);
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

GradCheckReport grad_check(const TapeScalarFn& build, std::vector<NamedMatrix> params,
                           double eps, double tol) {
  std::vector<Matrix> point;
  point.reserve(params.size());
  for (const auto& p : params) point.push_back(p.value);
  std::vector<Matrix> analytic = analytic_gradients(build, point);
  ScalarFn f = [&build](const std::vector<Matrix>& p) { return evaluate_scalar(build, p); };
  return compare_gradients(f, std::move(params), analytic, eps, tol);
}

}  // namespace relex::num
