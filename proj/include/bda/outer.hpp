#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bda/hypergrad.hpp"

namespace bda {

enum class Method { bda, rhg, trhg, ihg, obda };
std::string to_string(Method method);
Method parse_method(const std::string& name);

struct SolverConfig {
  Method method = Method::bda;
  int K = 20;  // forced to 1 for obda
  // trhg keeps the last `truncate_at` inner steps; defaults to K / 2.
  std::optional<int> truncate_at;
  // UL step size; chosen by estimate_step_size when absent.
  std::optional<double> lambda;
  int T_max = 1000;
  double stop_tol = 1e-8;
  AggregationSchedule sched;
  std::uint64_t seed = 0;
  std::optional<Vector> x0;  // default Proj_X(0)
  std::optional<Vector> y0;  // default Proj_Y(0)
  double obda_eps = 1e-4;
  // obda starts each outer iteration from the previous y_1.
  bool obda_warm_start = true;
  double cg_tol = 1e-10;
  int cg_max_iter = 1000;
  // Per-iteration inner traces and wall-clock stamps are opt-in.
  bool record_inner = false;
  bool record_timing = false;

  int effective_K() const { return method == Method::obda ? 1 : K; }
  void validate() const;
};

// Optional analytic metrics at one point.
struct Metrics {
  std::optional<double> err_x;    // ||x - x*||
  std::optional<double> err_y;    // ||y_K - y*||
  std::optional<double> f_gap;    // |f(x, y_K) - f*(x)|
  std::optional<double> phi_gap;  // |phi_K(x) - phi(x)|
};

Metrics evaluate_metrics(const BilevelProblem& problem, const Vector& x,
                         const Vector& y_K);

struct InnerRow {
  int k = 0;
  double f_value = 0.0;
  double F_value = 0.0;
  bool projection_active = false;
};

struct IterationRecord {
  int t = 0;
  Vector x;
  Vector y;  // y_K(x_t)
  double phiK = 0.0;
  double grad_norm = 0.0;
  Metrics metrics;
  std::optional<double> wall_ms;  // since the start of the solve
  std::vector<InnerRow> inner;    // filled when record_inner is set
};

enum class RunStatus { converged, max_iters, numerical_error };
std::string to_string(RunStatus status);

struct RunRecord {
  std::string problem;
  SolverConfig config;
  double lambda = 0.0;
  bool lambda_estimated = false;
  std::vector<IterationRecord> iterations;  // one row per outer step
  IterationRecord final_state;              // at the returned x
  RunStatus status = RunStatus::max_iters;
  std::string message;  // error text for numerical_error
  double wall_seconds = 0.0;
};

// x_{t+1} = Proj_X(x_t - lambda g)
Vector outer_step(const Vector& x, const Vector& g, double lambda,
                  const BoxRegion& region_x);

// Throws CapabilityError when the problem lacks what the method needs.
void check_capabilities(const BilevelProblem& problem, const SolverConfig& cfg);

// Hypergradient of the method at x.
HypergradResult method_hypergradient(const BilevelProblem& problem,
                                     const Vector& x, const SolverConfig& cfg);

// lambda = 0.5 / L where L is the largest observed difference quotient of the
// method's hypergradient over `samples` random pairs within `radius` of x0.
double estimate_step_size(const BilevelProblem& problem,
                          const SolverConfig& cfg, const Vector& x0,
                          int samples = 8, double radius = 1.0);

RunRecord solve(const BilevelProblem& problem, const SolverConfig& cfg);

}  // namespace bda
