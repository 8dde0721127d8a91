#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bda/inner.hpp"

namespace bda {

// Every tolerance used by the checkers, in one place.
struct VerifyTolerances {
  double fd_relative = 1e-5;         // estimator vs central differences
  double fd_step_scale = 1e-6;       // step = scale * (1 + ||x||)
  double descent_slack = -1e-9;      // minimum admissible descent slack
  double nonexpansive_slack = 1e-10;
  double sup_inflation = 1.05;       // margin on sampled suprema
  double oracle_residual = 1e-12;
  double stationarity_target = 1e-3;
};
inline constexpr VerifyTolerances kTolerances{};

using ScalarMap = std::function<double(const Vector&)>;

// Central differences per coordinate.
Vector fd_gradient(const ScalarMap& map, const Vector& x, double eps);

struct GridMin {
  double x_min = 0.0;
  double value = 0.0;
};
// Uniform grid over [lo, hi] with `points` nodes; ties keep the smallest x.
GridMin grid_argmin(const std::function<double(double)>& map, double lo,
                    double hi, long points);

struct CheckReport {
  std::string check_name;
  bool passed = true;
  double worst_margin = 0.0;  // negative margins are violations
  std::string location;       // where the worst margin occurred
  std::vector<std::string> hypothesis_breaches;
  std::vector<std::string> violations;
  long evaluated = 0;

  std::string status() const;  // pass | fail | hypothesis-breach
  std::string to_json() const;
};

struct RateConstants {
  double D = 0.0;
  double M_F = 0.0;
  double M_f = 0.0;
  double C0 = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
  double C3 = 0.0;
  double beta_lower = 0.0;
  double c_beta = 0.0;
  double s_l = 0.0;
  double s_u = 0.0;
  double mu = 0.0;
  double L_F = 0.0;
  double L_f = 0.0;
  double phi = 0.0;  // phi(x) at the point the constants were built for
  double M0 = 0.0;
};

// Suprema D, M_F, M_f from `sample_density` samples over X x Y (box vertices
// included) inflated by the tolerance margin; C0..C3 at the given x.
RateConstants compute_rate_constants(const BilevelProblem& problem,
                                     const AggregationSchedule& sched,
                                     const Vector& x, int sample_density,
                                     std::uint64_t seed = 0);

// Both convergence-rate inequalities for k in [2, k_max].
CheckReport check_rate_bound(const BilevelProblem& problem, const Vector& x,
                             const AggregationSchedule& sched, int k_max,
                             const RateConstants& constants);

// Descent inequality of function values at sampled (k, y~) pairs plus the
// feasible choice y~ = y_k at every k. Pass iff min slack >= -1e-9.
CheckReport check_descent_inequality(const BilevelProblem& problem,
                                     const Vector& x, const InnerTrace& trace,
                                     const AggregationSchedule& sched,
                                     int num_test_points, std::uint64_t seed);

// ||z^l_{k+1} - ybar|| <= ||y_k - ybar|| for each ybar supplied.
CheckReport check_nonexpansive(const InnerTrace& trace,
                               const std::vector<Vector>& ybars);

// Grid maximum of ||grad phi_k(x) - grad phi(x)|| for each k (forward mode).
std::vector<double> check_stationarity(const BilevelProblem& problem,
                                       const std::vector<Vector>& grid,
                                       const AggregationSchedule& sched,
                                       const std::vector<int>& k_list);

struct RhgLimit {
  double x_hat = 0.0;
  double residual = 0.0;
  double a = 0.0;
};
// Per-coordinate stationary point of RHG's phi_K on the counterexample:
// root of t^3 + a (a t - 1)^3 on [0, 1] with a = 1 - (1 - s_l)^K.
RhgLimit rhg_limit_oracle_counterexample(double s_l, int K);

// Least-squares slope of log(err) against log(eps).
double log_log_slope(const std::vector<double>& eps,
                     const std::vector<double>& err);

}  // namespace bda
