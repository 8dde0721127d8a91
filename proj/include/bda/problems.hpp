#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "bda/problem.hpp"

namespace bda {

using ProblemPtr = std::shared_ptr<const BilevelProblem>;

/// Counter-example without a singleton LL solution set.
///
/// UL variable x in R^n, LL variable w = (y, z) in R^{2n}:
///
///   F(x, w) = ||x - z||^4 + ||y - e||^4,   f(x, w) = 1/2 ||y||^2 - x^T y.
///
/// f ignores z, so S(x) = {(x, z) : z free}. Choosing z = x inside S(x) gives
/// the value function phi(x) = ||x - e||^4 and the unique solution
/// x* = y* = z* = e. With `y_half_width` set, Y is the box [-w, w]^{2n}; the
/// analytic references then use the clamped LL solution.
struct CounterexampleOptions {
  int n = 1;
  double x_half_width = 100.0;
  std::optional<double> y_half_width;
};
ProblemPtr make_counterexample(const CounterexampleOptions& options);
inline ProblemPtr make_counterexample(int n) {
  return make_counterexample(
      CounterexampleOptions{.n = n, .x_half_width = 100.0, .y_half_width = {}});
}

/// Scalar UL, two-dimensional LL:
///
///   F(x, y) = 1/2 (x - y2)^2 + 1/2 (y1 - 1)^2,
///   f(x, y) = 1/2 y1^2 - x y1 + 1/2 eps y2^2.
///
/// With eps = 0 the LL solution set is the line y1 = x, and the optimum is
/// x* = 1, y* = (1, 1). A positive `ll_ridge` eps makes f strongly convex but
/// moves the solution to x* = 1/2 for every eps > 0.
ProblemPtr make_remark1(double ll_ridge = 0.0);

// Closed form of the RHG outer optimum on make_remark1 when the inner loop is
// K plain gradient steps with constant step s from y0 = 0.
double remark1_contraction(double step, int K);          // a_K = 1 - (1-s)^K
double remark1_rhg_optimum(double step, int K);          // a_K / (1 + a_K^2)

/// Lower-level-singleton quadratic fixture:
///
///   f(x, y) = 1/2 y^T A y - (B x)^T y,
///   F(x, y) = 1/2 ||y - b||^2 + 1/2 rho ||x||^2,
///
/// with A symmetric positive definite. y*(x) = A^{-1} B x and
/// grad phi(x) = rho x + (A^{-1} B)^T (y* - b).
struct LlsQuadraticData {
  Matrix A;  // m x m, SPD
  Matrix B;  // m x n
  Vector b;  // m
  double rho = 0.0;
  double x_half_width = 10.0;
};
ProblemPtr make_lls_quadratic(const LlsQuadraticData& data);
// Random well-conditioned instance: A = G^T G / m + I, B and b standard
// normal, rho = 0.1.
ProblemPtr make_lls_quadratic(int n, int m, std::uint64_t seed);

}  // namespace bda
