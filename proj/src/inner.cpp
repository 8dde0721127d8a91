#include "bda/inner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bda/errors.hpp"

namespace bda {

std::string to_string(AlphaRule rule) {
  switch (rule) {
    case AlphaRule::harmonic: return "harmonic";
    case AlphaRule::scaled: return "scaled";
    case AlphaRule::constant: return "constant";
    case AlphaRule::zero: return "zero";
  }
  return "?";
}

std::string to_string(BetaRule rule) {
  return rule == BetaRule::constant ? "constant" : "declining";
}

std::string to_string(InnerMode mode) {
  return mode == InnerMode::bda ? "bda" : "plain";
}

AlphaRule parse_alpha_rule(const std::string& name) {
  if (name == "harmonic") return AlphaRule::harmonic;
  if (name == "scaled") return AlphaRule::scaled;
  if (name == "constant") return AlphaRule::constant;
  if (name == "zero") return AlphaRule::zero;
  throw ContractViolation("unknown alpha rule '" + name + "'");
}

BetaRule parse_beta_rule(const std::string& name) {
  if (name == "constant") return BetaRule::constant;
  if (name == "declining") return BetaRule::declining;
  throw ContractViolation("unknown beta rule '" + name + "'");
}

double AggregationSchedule::alpha(int k) const {
  switch (alpha_rule) {
    case AlphaRule::harmonic: return 1.0 / (k + 1.0);
    case AlphaRule::scaled: return alpha_param / (k + 1.0);
    case AlphaRule::constant: return alpha_param;
    case AlphaRule::zero: return 0.0;
  }
  return 0.0;
}

double AggregationSchedule::beta(int k) const {
  if (beta_rule == BetaRule::constant) return beta_param;
  double drop = 0.0;
  for (int j = 1; j <= k; ++j) drop += 1.0 / ((j + 1.0) * (j + 1.0));
  return std::max(beta_floor, beta_param - c_beta * drop);
}

double AggregationSchedule::beta_lower() const {
  return beta_rule == BetaRule::constant ? beta_param : beta_floor;
}

void AggregationSchedule::validate() const {
  auto fail = [](const std::string& what) {
    throw ContractViolation("schedule: " + what);
  };
  if (diagnostic ? !(mu >= 0.0 && mu < 1.0) : !(mu > 0.0 && mu < 1.0)) {
    fail("mu must lie in (0,1)");
  }
  if (!(s_u > 0.0) || !std::isfinite(s_u)) fail("s_u must be positive");
  if (!(s_l > 0.0) || !std::isfinite(s_l)) fail("s_l must be positive");
  if ((alpha_rule == AlphaRule::scaled || alpha_rule == AlphaRule::constant) &&
      !(alpha_param > 0.0 && alpha_param <= 1.0)) {
    fail("alpha parameter must lie in (0,1]");
  }
  if (!(beta_param > 0.0 && beta_param <= 1.0)) {
    fail("beta must lie in (0,1]");
  }
  if (!(c_beta >= 0.0)) fail("c_beta must be >= 0");
  if (beta_rule == BetaRule::declining &&
      !(beta_floor > 0.0 && beta_floor <= beta_param)) {
    fail("beta floor must lie in (0, beta]");
  }
}

std::vector<std::string> AggregationSchedule::hypothesis_breaches(
    const BilevelProblem& problem) const {
  std::vector<std::string> out;
  if (auto L = problem.lipschitz_F(); L && !(s_u * *L < 1.0)) {
    std::ostringstream msg;
    msg << "s_u=" << s_u << " is not below 1/L_F=" << 1.0 / *L;
    out.push_back(msg.str());
  }
  if (auto L = problem.lipschitz_f(); L && !(s_l * *L < 1.0)) {
    std::ostringstream msg;
    msg << "s_l=" << s_l << " is not below 1/L_f=" << 1.0 / *L;
    out.push_back(msg.str());
  }
  if (!(mu > 0.0 && mu < 1.0)) out.push_back("mu outside (0,1)");
  return out;
}

DescentDirections descent_directions(const BilevelProblem& problem,
                                     const Vector& x, const Vector& y,
                                     const AggregationSchedule& sched) {
  DescentDirections d{sched.s_u * problem.grad_y_F(x, y),
                      sched.s_l * problem.grad_y_f(x, y)};
  require_finite(d.dF, "descent_directions: grad_y F");
  require_finite(d.df, "descent_directions: grad_y f");
  return d;
}

AggregatedStep aggregated_step(const BilevelProblem& problem, const Vector& x,
                               const Vector& y, int k,
                               const AggregationSchedule& sched) {
  require_same_dim(y.size(), problem.m(), "aggregated_step");
  const auto d = descent_directions(problem, x, y, sched);
  AggregatedStep step;
  step.z_u = y - sched.alpha(k) * d.dF;
  step.z_l = y - sched.beta(k) * d.df;
  const Vector combined = (1.0 - sched.mu) * step.z_l + sched.mu * step.z_u;
  step.projection_active = projection_active(combined, problem.region_y());
  step.y_next = project_box(combined, problem.region_y());
  return step;
}

Vector plain_gd_step(const BilevelProblem& problem, const Vector& x,
                     const Vector& y, double step) {
  if (!(step > 0.0)) {
    throw ContractViolation("plain_gd_step: step must be positive");
  }
  require_same_dim(y.size(), problem.m(), "plain_gd_step");
  const Vector g = problem.grad_y_f(x, y);
  require_finite(g, "plain_gd_step: grad_y f");
  return project_box(y - step * g, problem.region_y());
}

Vector default_initial_point(const BilevelProblem& problem) {
  return project_box(Vector::Zero(problem.m()), problem.region_y());
}

InnerResult run_inner(const BilevelProblem& problem, const Vector& x, int K,
                      const AggregationSchedule& sched, InnerMode mode,
                      const std::optional<Vector>& y0) {
  if (K < 0) throw ContractViolation("run_inner: K must be >= 0");
  require_same_dim(x.size(), problem.n(), "run_inner x");
  require_finite(x, "run_inner x");
  if (mode == InnerMode::bda) sched.validate();

  Vector y = y0 ? project_box(*y0, problem.region_y())
                : default_initial_point(problem);
  InnerResult out;
  out.trace.records.reserve(static_cast<std::size_t>(K) + 1);
  out.trace.records.push_back(InnerRecord{y, {}, {}, problem.f(x, y),
                                          problem.F(x, y), 0.0, 0.0,
                                          std::vector<bool>(y.size(), false)});
  for (int k = 0; k < K; ++k) {
    InnerRecord rec;
    try {
      if (mode == InnerMode::bda) {
        auto step = aggregated_step(problem, x, y, k, sched);
        rec.z_u = std::move(step.z_u);
        rec.z_l = std::move(step.z_l);
        rec.projection_active = std::move(step.projection_active);
        rec.alpha = sched.alpha(k);
        rec.beta = sched.beta(k);
        y = std::move(step.y_next);
      } else {
        const Vector g = problem.grad_y_f(x, y);
        require_finite(g, "grad_y f");
        const Vector raw = y - sched.s_l * g;
        rec.projection_active = projection_active(raw, problem.region_y());
        y = project_box(raw, problem.region_y());
      }
      rec.y = y;
      rec.f_value = problem.f(x, y);
      rec.F_value = problem.F(x, y);
      require_finite(rec.f_value, "f");
      require_finite(rec.F_value, "F");
    } catch (const NumericalError& e) {
      throw NumericalError("run_inner iteration " + std::to_string(k) + ": " +
                           e.what());
    }
    out.trace.records.push_back(std::move(rec));
  }
  out.y = y;
  return out;
}

}  // namespace bda
