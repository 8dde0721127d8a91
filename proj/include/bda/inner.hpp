#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bda/problem.hpp"

namespace bda {

enum class AlphaRule {
  harmonic,  // 1 / (k + 1)
  scaled,    // c / k with k counted from 1, i.e. c / (k + 1) at step index k
  constant,  // a in (0, 1]
  zero,      // UL guidance switched off
};

enum class BetaRule {
  constant,   // beta_k = b
  declining,  // b - c_beta * sum_{j=1..k} 1/(j+1)^2, floored at beta_lower
};

std::string to_string(AlphaRule rule);
std::string to_string(BetaRule rule);
AlphaRule parse_alpha_rule(const std::string& name);
BetaRule parse_beta_rule(const std::string& name);

// Aggregation parameters of the BDA inner update. Step indices k are 0-based:
// the k-th update maps y_k to y_{k+1}.
struct AggregationSchedule {
  double mu = 0.1;
  double s_u = 0.1;
  double s_l = 0.1;
  AlphaRule alpha_rule = AlphaRule::scaled;
  double alpha_param = 0.5;  // c for `scaled`, a for `constant`
  BetaRule beta_rule = BetaRule::constant;
  double beta_param = 1.0;  // constant value, or starting value when declining
  double c_beta = 0.0;
  double beta_floor = 0.5;  // only used by `declining`
  // mu = 0 is accepted only in this mode; BDA then degenerates to plain
  // gradient descent on f with step s_l * beta_k.
  bool diagnostic = false;

  double alpha(int k) const;
  double beta(int k) const;
  // The lower bound underline-beta of the beta sequence.
  double beta_lower() const;

  // Throws ContractViolation for parameters outside their domains.
  void validate() const;
  // Descriptions of violated step-size hypotheses (s_u < 1/L_F,
  // s_l < 1/L_f) for the problem's declared constants; empty if none.
  std::vector<std::string> hypothesis_breaches(
      const BilevelProblem& problem) const;
};

enum class InnerMode { bda, plain };
std::string to_string(InnerMode mode);

struct DescentDirections {
  Vector dF;  // s_u * grad_y F
  Vector df;  // s_l * grad_y f
};

DescentDirections descent_directions(const BilevelProblem& problem,
                                     const Vector& x, const Vector& y,
                                     const AggregationSchedule& sched);

struct AggregatedStep {
  Vector y_next;
  Vector z_u;  // y_k - s_u alpha_k grad_y F
  Vector z_l;  // y_k - s_l beta_k grad_y f
  std::vector<bool> projection_active;
};

// One BDA update: y_{k+1} = Proj_Y((1 - mu) z_l + mu z_u).
AggregatedStep aggregated_step(const BilevelProblem& problem, const Vector& x,
                               const Vector& y, int k,
                               const AggregationSchedule& sched);

// One projected LL gradient step y - s grad_y f.
Vector plain_gd_step(const BilevelProblem& problem, const Vector& x,
                     const Vector& y, double step);

struct InnerRecord {
  Vector y;
  // Auxiliary points that produced y (empty for the initial record and in
  // plain mode).
  Vector z_u;
  Vector z_l;
  double f_value = 0.0;
  double F_value = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<bool> projection_active;
};

struct InnerTrace {
  std::vector<InnerRecord> records;  // K + 1 entries, records[0] is y_0
};

struct InnerResult {
  Vector y;
  InnerTrace trace;
};

// Default initialization Proj_Y(0).
Vector default_initial_point(const BilevelProblem& problem);

InnerResult run_inner(const BilevelProblem& problem, const Vector& x, int K,
                      const AggregationSchedule& sched, InnerMode mode,
                      const std::optional<Vector>& y0 = std::nullopt);

}  // namespace bda
