#pragma once

#include <functional>
#include <optional>
#include <string>

#include "bda/inner.hpp"

namespace bda {

struct HypergradDiagnostics {
  int unrolled_steps = 0;
  std::optional<int> truncate_at;
  std::optional<double> cg_residual;  // relative residual ||Hq - b|| / ||b||
  int cg_iterations = 0;
  std::optional<double> fd_eps;
  // Whether any projection along the differentiated trajectory clamped a
  // coordinate (for the one-stage scheme: which branch fired).
  bool projection_active = false;
};

struct HypergradResult {
  Vector gradient;  // length n
  std::string method;
  HypergradDiagnostics diagnostics;
  Vector y_final;       // the LL point the estimate was taken at
  double phi = 0.0;     // F(x, y_final)
};

/// Reverse-mode unrolled hypergradient of phi_K(x) = F(x, y_K(x)).
///
/// Runs the inner dynamics and accumulates
///   grad phi_K = grad_x F + (dy_K/dx)^T grad_y F
/// by a backward sweep over the stored iterates. Projections are
/// differentiated with the 0/1 diagonal selection that zeroes clamped
/// coordinates. With `truncate_at = t` only the last t steps are
/// differentiated (dy_{K-t}/dx is treated as zero).
HypergradResult hypergrad_reverse(const BilevelProblem& problem,
                                  const Vector& x, int K,
                                  const AggregationSchedule& sched,
                                  InnerMode mode,
                                  std::optional<int> truncate_at = std::nullopt,
                                  const std::optional<Vector>& y0 = std::nullopt);

/// Forward-mode propagation of the Jacobian dy_k/dx alongside the inner
/// iterates. Same recursion as the reverse sweep, associated the other way.
/// With `strict` set, a trajectory on which the projection clamps anything is
/// refused with a CapabilityError.
HypergradResult hypergrad_forward(const BilevelProblem& problem,
                                  const Vector& x, int K,
                                  const AggregationSchedule& sched,
                                  InnerMode mode, bool strict = false,
                                  const std::optional<Vector>& y0 = std::nullopt);

/// Implicit-function hypergradient at an approximate LL solution y_hat:
/// q = (hess_yy f)^{-1} grad_y F by conjugate gradients, then
/// grad phi = grad_x F - (hess_yx f)^T q.
HypergradResult hypergrad_implicit(const BilevelProblem& problem,
                                   const Vector& x, const Vector& y_hat,
                                   double cg_tol = 1e-10,
                                   int cg_max_iter = 1000);

/// One-stage scheme: a single aggregated step
///   y_1 = Proj_Y(y_0 - s (a grad_y F + b grad_y f)),
/// with s = s_l, a = mu alpha_0 s_u / s_l and b = (1 - mu) beta_0 (the same
/// map as the first BDA step), differentiated by finite differences of
/// grad_x(a F + b f) around y_0.
HypergradResult hypergrad_onestage(const BilevelProblem& problem,
                                   const Vector& x, const Vector& y0,
                                   const AggregationSchedule& sched,
                                   double eps);

struct CgResult {
  Vector solution;
  double relative_residual = 0.0;
  int iterations = 0;
};

// Conjugate gradients for an SPD operator. Throws CapabilityError on
// non-positive curvature and ConvergenceError past max_iter.
CgResult conjugate_gradient(const std::function<Vector(const Vector&)>& apply,
                            const Vector& rhs, double tol, int max_iter);

}  // namespace bda
