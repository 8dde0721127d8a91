#include "bda/hypergrad.hpp"

#include <cmath>

#include "bda/errors.hpp"

namespace bda {
namespace {

void require_hessians(const BilevelProblem& problem, InnerMode mode,
                      const char* who) {
  if (mode == InnerMode::bda && !problem.has_hessians_F()) {
    throw CapabilityError(std::string(who) +
                          ": problem lacks hess_yy_F / hess_yx_F");
  }
  if (!problem.has_hessians_f()) {
    throw CapabilityError(std::string(who) +
                          ": problem lacks hess_yy_f / hess_yx_f");
  }
}

// Weights (a_k, b_k) of the step map y -> y - a grad_y F - b grad_y f.
struct StepWeights {
  double a = 0.0;
  double b = 0.0;
};

StepWeights step_weights(const AggregationSchedule& sched, InnerMode mode,
                         int k) {
  if (mode == InnerMode::plain) return {0.0, sched.s_l};
  return {sched.mu * sched.alpha(k) * sched.s_u,
          (1.0 - sched.mu) * sched.beta(k) * sched.s_l};
}

void mask_rows(Vector& v, const std::vector<bool>& active) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (active[static_cast<std::size_t>(i)]) v[i] = 0.0;
  }
}

void mask_rows(Matrix& J, const std::vector<bool>& active) {
  for (Eigen::Index i = 0; i < J.rows(); ++i) {
    if (active[static_cast<std::size_t>(i)]) J.row(i).setZero();
  }
}

bool any_active(const std::vector<bool>& active) {
  for (bool a : active) {
    if (a) return true;
  }
  return false;
}

}  // namespace

HypergradResult hypergrad_reverse(const BilevelProblem& problem,
                                  const Vector& x, int K,
                                  const AggregationSchedule& sched,
                                  InnerMode mode,
                                  std::optional<int> truncate_at,
                                  const std::optional<Vector>& y0) {
  require_hessians(problem, mode, "hypergrad_reverse");
  if (truncate_at && (*truncate_at < 0 || *truncate_at > K)) {
    throw ContractViolation("hypergrad_reverse: truncate_at must lie in [0, K]");
  }
  const auto inner = run_inner(problem, x, K, sched, mode, y0);
  const auto& recs = inner.trace.records;

  Vector g = problem.grad_y_F(x, inner.y);
  Vector grad = problem.grad_x_F(x, inner.y);
  require_finite(g, "hypergrad_reverse: grad_y F");
  require_finite(grad, "hypergrad_reverse: grad_x F");

  HypergradResult out;
  const int stop = truncate_at ? K - *truncate_at : 0;
  for (int k = K - 1; k >= stop; --k) {
    const auto& rec = recs[static_cast<std::size_t>(k) + 1];
    if (any_active(rec.projection_active)) {
      out.diagnostics.projection_active = true;
    }
    mask_rows(g, rec.projection_active);
    const Vector& yk = recs[static_cast<std::size_t>(k)].y;
    const auto w = step_weights(sched, mode, k);
    Vector next = g;
    if (w.a != 0.0) {
      grad -= w.a * problem.hess_yx_F_transpose_times(x, yk, g);
      next -= w.a * problem.hess_yy_F_times(x, yk, g);
    }
    grad -= w.b * problem.hess_yx_f_transpose_times(x, yk, g);
    next -= w.b * problem.hess_yy_f_times(x, yk, g);
    g = std::move(next);
  }
  require_finite(grad, "hypergrad_reverse: gradient");

  out.gradient = std::move(grad);
  out.method = mode == InnerMode::bda ? "reverse-bda" : "reverse-plain";
  out.diagnostics.unrolled_steps = K - stop;
  out.diagnostics.truncate_at = truncate_at;
  out.y_final = inner.y;
  out.phi = problem.F(x, inner.y);
  return out;
}

HypergradResult hypergrad_forward(const BilevelProblem& problem,
                                  const Vector& x, int K,
                                  const AggregationSchedule& sched,
                                  InnerMode mode, bool strict,
                                  const std::optional<Vector>& y0) {
  require_hessians(problem, mode, "hypergrad_forward");
  const auto inner = run_inner(problem, x, K, sched, mode, y0);
  const auto& recs = inner.trace.records;

  HypergradResult out;
  Matrix J = Matrix::Zero(problem.m(), problem.n());
  for (int k = 0; k < K; ++k) {
    const auto& rec = recs[static_cast<std::size_t>(k) + 1];
    if (any_active(rec.projection_active)) {
      if (strict) {
        throw CapabilityError(
            "hypergrad_forward: projection active at step " +
            std::to_string(k) + " (strict mode)");
      }
      out.diagnostics.projection_active = true;
    }
    const Vector& yk = recs[static_cast<std::size_t>(k)].y;
    const auto w = step_weights(sched, mode, k);
    Matrix next = J - w.b * (problem.hess_yy_f(x, yk) * J) -
                  w.b * problem.hess_yx_f(x, yk);
    if (w.a != 0.0) {
      next -= w.a * (problem.hess_yy_F(x, yk) * J);
      next -= w.a * problem.hess_yx_F(x, yk);
    }
    mask_rows(next, rec.projection_active);
    J = std::move(next);
  }
  Vector grad =
      problem.grad_x_F(x, inner.y) + J.transpose() * problem.grad_y_F(x, inner.y);
  require_finite(grad, "hypergrad_forward: gradient");

  out.gradient = std::move(grad);
  out.method = mode == InnerMode::bda ? "forward-bda" : "forward-plain";
  out.diagnostics.unrolled_steps = K;
  out.y_final = inner.y;
  out.phi = problem.F(x, inner.y);
  return out;
}

CgResult conjugate_gradient(const std::function<Vector(const Vector&)>& apply,
                            const Vector& rhs, double tol, int max_iter) {
  if (!(tol > 0.0)) throw ContractViolation("cg: tol must be positive");
  if (max_iter < 1) throw ContractViolation("cg: max_iter must be >= 1");
  CgResult out;
  out.solution = Vector::Zero(rhs.size());
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) return out;

  Vector r = rhs;
  Vector p = r;
  double rr = r.squaredNorm();
  double curvature_scale = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vector Ap = apply(p);
    const double pAp = p.dot(Ap);
    const double pp = p.squaredNorm();
    const double ratio = pAp / pp;
    curvature_scale = std::max(curvature_scale, std::abs(ratio));
    if (!(ratio > 1e-12 * curvature_scale) || !std::isfinite(ratio)) {
      throw CapabilityError(
          "hypergrad_implicit: hess_yy_f is not positive definite "
          "(non-positive curvature at CG iteration " +
          std::to_string(it) + ")");
    }
    const double step = rr / pAp;
    out.solution += step * p;
    r -= step * Ap;
    const double rr_next = r.squaredNorm();
    out.iterations = it + 1;
    out.relative_residual = std::sqrt(rr_next) / bnorm;
    if (out.relative_residual <= tol) return out;
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  throw ConvergenceError("conjugate gradient did not reach tolerance in " +
                             std::to_string(max_iter) + " iterations",
                         out.relative_residual);
}

HypergradResult hypergrad_implicit(const BilevelProblem& problem,
                                   const Vector& x, const Vector& y_hat,
                                   double cg_tol, int cg_max_iter) {
  if (!problem.has_hessians_f()) {
    throw CapabilityError(
        "hypergrad_implicit: problem lacks hess_yy_f / hess_yx_f");
  }
  require_same_dim(y_hat.size(), problem.m(), "hypergrad_implicit y_hat");
  const Vector rhs = problem.grad_y_F(x, y_hat);
  require_finite(rhs, "hypergrad_implicit: grad_y F");
  const auto cg = conjugate_gradient(
      [&](const Vector& v) { return problem.hess_yy_f_times(x, y_hat, v); },
      rhs, cg_tol, cg_max_iter);

  HypergradResult out;
  out.gradient = problem.grad_x_F(x, y_hat) -
                 problem.hess_yx_f_transpose_times(x, y_hat, cg.solution);
  require_finite(out.gradient, "hypergrad_implicit: gradient");
  out.method = "implicit";
  out.diagnostics.cg_residual = cg.relative_residual;
  out.diagnostics.cg_iterations = cg.iterations;
  out.y_final = y_hat;
  out.phi = problem.F(x, y_hat);
  return out;
}

HypergradResult hypergrad_onestage(const BilevelProblem& problem,
                                   const Vector& x, const Vector& y0,
                                   const AggregationSchedule& sched,
                                   double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ContractViolation("hypergrad_onestage: eps must be positive");
  }
  sched.validate();
  require_same_dim(y0.size(), problem.m(), "hypergrad_onestage y0");
  const double s = sched.s_l;
  const double a = sched.mu * sched.alpha(0) * sched.s_u / sched.s_l;
  const double b = (1.0 - sched.mu) * sched.beta(0);
  const auto& Y = problem.region_y();

  auto grad_x_phi = [&](const Vector& y) -> Vector {
    Vector v = b * problem.grad_x_f(x, y);
    if (a != 0.0) v += a * problem.grad_x_F(x, y);
    return v;
  };

  Vector dy = b * problem.grad_y_f(x, y0);
  if (a != 0.0) dy += a * problem.grad_y_F(x, y0);
  const Vector z0 = y0 - s * dy;
  const auto active = projection_active(z0, Y);
  const Vector y1 = project_box(z0, Y);
  const Vector g = problem.grad_y_F(x, y1);
  require_finite(g, "hypergrad_onestage: grad_y F");
  const bool nonzero = g.cwiseAbs().maxCoeff() > 0.0;

  HypergradResult out;
  out.gradient = problem.grad_x_F(x, y1);
  if (!any_active(active)) {
    const Vector hp = y0 + eps * g;
    const Vector hm = y0 - eps * g;
    if (nonzero && hp == hm) {
      throw NumericalError("hypergrad_onestage: eps=" + std::to_string(eps) +
                           " is degenerate (h+ == h-)");
    }
    out.gradient -= s * (grad_x_phi(hp) - grad_x_phi(hm)) / (2.0 * eps);
  } else {
    out.diagnostics.projection_active = true;
    const double r = std::sqrt(eps);
    const Vector vp = project_box(z0 + r * g, Y);
    const Vector vm = project_box(z0 - r * g, Y);
    const Vector hpp = y0 + eps * vp, hmp = y0 - eps * vp;
    const Vector hpm = y0 + eps * vm, hmm = y0 - eps * vm;
    if (nonzero && hpp == hmp && hpm == hmm) {
      throw NumericalError("hypergrad_onestage: eps=" + std::to_string(eps) +
                           " is degenerate (h++ == h-+)");
    }
    const Vector num = (grad_x_phi(hpp) - grad_x_phi(hmp)) -
                       (grad_x_phi(hpm) - grad_x_phi(hmm));
    out.gradient -= s * num / (4.0 * eps * r);
  }
  require_finite(out.gradient, "hypergrad_onestage: gradient");
  out.method = "onestage";
  out.diagnostics.unrolled_steps = 1;
  out.diagnostics.fd_eps = eps;
  out.y_final = y1;
  out.phi = problem.F(x, y1);
  return out;
}

}  // namespace bda
