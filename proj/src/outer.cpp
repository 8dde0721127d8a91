#include "bda/outer.hpp"

#include <chrono>
#include <cmath>

#include "bda/errors.hpp"

namespace bda {

std::string to_string(Method method) {
  switch (method) {
    case Method::bda: return "bda";
    case Method::rhg: return "rhg";
    case Method::trhg: return "trhg";
    case Method::ihg: return "ihg";
    case Method::obda: return "obda";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "bda") return Method::bda;
  if (name == "rhg") return Method::rhg;
  if (name == "trhg") return Method::trhg;
  if (name == "ihg") return Method::ihg;
  if (name == "obda") return Method::obda;
  throw ContractViolation("unknown method '" + name + "'");
}

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::converged: return "converged";
    case RunStatus::max_iters: return "max-iters";
    case RunStatus::numerical_error: return "numerical-error";
  }
  return "?";
}

void SolverConfig::validate() const {
  if (K < 1) throw ContractViolation("solver: K must be >= 1");
  if (T_max < 1) throw ContractViolation("solver: T_max must be >= 1");
  if (lambda && !(*lambda > 0.0 && std::isfinite(*lambda))) {
    throw ContractViolation("solver: lambda must be positive");
  }
  if (!(stop_tol >= 0.0)) throw ContractViolation("solver: stop_tol < 0");
  if (truncate_at && (*truncate_at < 0 || *truncate_at > K)) {
    throw ContractViolation("solver: truncate_at must lie in [0, K]");
  }
  if (!(obda_eps > 0.0)) throw ContractViolation("solver: obda_eps <= 0");
  sched.validate();
}

Metrics evaluate_metrics(const BilevelProblem& problem, const Vector& x,
                         const Vector& y_K) {
  Metrics m;
  if (auto xs = problem.optimal_x()) m.err_x = (x - *xs).norm();
  if (auto ys = problem.optimal_y()) m.err_y = (y_K - *ys).norm();
  if (auto fs = problem.ll_value(x)) m.f_gap = std::abs(problem.f(x, y_K) - *fs);
  if (auto phi = problem.value_function(x)) {
    m.phi_gap = std::abs(problem.F(x, y_K) - *phi);
  }
  return m;
}

Vector outer_step(const Vector& x, const Vector& g, double lambda,
                  const BoxRegion& region_x) {
  require_finite(g, "outer_step gradient");
  require_same_dim(x.size(), g.size(), "outer_step");
  return project_box(x - lambda * g, region_x);
}

void check_capabilities(const BilevelProblem& problem,
                        const SolverConfig& cfg) {
  const std::string who = "method " + to_string(cfg.method);
  switch (cfg.method) {
    case Method::bda:
      if (!problem.has_hessians_F()) {
        throw CapabilityError(who + " needs hess_yy_F / hess_yx_F");
      }
      [[fallthrough]];
    case Method::rhg:
    case Method::trhg:
    case Method::ihg:
      if (!problem.has_hessians_f()) {
        throw CapabilityError(who + " needs hess_yy_f / hess_yx_f");
      }
      break;
    case Method::obda:
      break;
  }
}

HypergradResult method_hypergradient(const BilevelProblem& problem,
                                     const Vector& x, const SolverConfig& cfg) {
  const int K = cfg.effective_K();
  switch (cfg.method) {
    case Method::bda:
      return hypergrad_reverse(problem, x, K, cfg.sched, InnerMode::bda,
                               std::nullopt, cfg.y0);
    case Method::rhg:
      return hypergrad_reverse(problem, x, K, cfg.sched, InnerMode::plain,
                               std::nullopt, cfg.y0);
    case Method::trhg:
      return hypergrad_reverse(problem, x, K, cfg.sched, InnerMode::plain,
                               cfg.truncate_at.value_or(K / 2), cfg.y0);
    case Method::ihg: {
      const auto inner = run_inner(problem, x, K, cfg.sched, InnerMode::plain,
                                   cfg.y0);
      return hypergrad_implicit(problem, x, inner.y, cfg.cg_tol,
                                cfg.cg_max_iter);
    }
    case Method::obda: {
      const Vector y0 = cfg.y0 ? project_box(*cfg.y0, problem.region_y())
                               : default_initial_point(problem);
      return hypergrad_onestage(problem, x, y0, cfg.sched, cfg.obda_eps);
    }
  }
  throw ContractViolation("unknown method");
}

double estimate_step_size(const BilevelProblem& problem,
                          const SolverConfig& cfg, const Vector& x0,
                          int samples, double radius) {
  RngStream rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const double delta = 1e-3 * radius;
  double L = 0.0;
  for (int s = 0; s < samples; ++s) {
    Vector xa = x0 + rng.uniform_vector(x0.size(), -radius, radius);
    xa = project_box(xa, problem.region_x());
    Vector dir = rng.normal_vector(x0.size());
    dir /= dir.norm();
    const Vector xb = project_box(xa + delta * dir, problem.region_x());
    const double dist = (xb - xa).norm();
    if (dist == 0.0) continue;
    const Vector ga = method_hypergradient(problem, xa, cfg).gradient;
    const Vector gb = method_hypergradient(problem, xb, cfg).gradient;
    L = std::max(L, (gb - ga).norm() / dist);
  }
  if (!(L > 0.0) || !std::isfinite(L)) return 1.0;
  return 0.5 / L;
}

namespace {

IterationRecord make_row(const BilevelProblem& problem, const SolverConfig& cfg,
                         int t, const Vector& x, const HypergradResult& hg) {
  IterationRecord row;
  row.t = t;
  row.x = x;
  row.y = hg.y_final;
  row.phiK = hg.phi;
  row.grad_norm = hg.gradient.norm();
  row.metrics = evaluate_metrics(problem, x, hg.y_final);
  if (cfg.record_inner) {
    const auto inner = run_inner(
        problem, x, cfg.effective_K(), cfg.sched,
        cfg.method == Method::bda || cfg.method == Method::obda
            ? InnerMode::bda
            : InnerMode::plain,
        cfg.y0);
    for (std::size_t k = 0; k < inner.trace.records.size(); ++k) {
      const auto& rec = inner.trace.records[k];
      bool active = false;
      for (bool a : rec.projection_active) active = active || a;
      row.inner.push_back(
          InnerRow{static_cast<int>(k), rec.f_value, rec.F_value, active});
    }
  }
  return row;
}

}  // namespace

RunRecord solve(const BilevelProblem& problem, const SolverConfig& cfg) {
  cfg.validate();
  check_capabilities(problem, cfg);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start)
        .count();
  };

  RunRecord rec;
  rec.problem = problem.name();
  rec.config = cfg;
  Vector x = cfg.x0 ? *cfg.x0 : Vector::Zero(problem.n());
  require_same_dim(x.size(), problem.n(), "solve x0");
  x = project_box(x, problem.region_x());

  try {
    if (cfg.lambda) {
      rec.lambda = *cfg.lambda;
    } else {
      rec.lambda = estimate_step_size(problem, cfg, x);
      rec.lambda_estimated = true;
    }
    rec.status = RunStatus::max_iters;
    SolverConfig step_cfg = cfg;
    const bool carry_y = cfg.method == Method::obda && cfg.obda_warm_start;
    for (int t = 0; t < cfg.T_max; ++t) {
      const auto hg = method_hypergradient(problem, x, step_cfg);
      auto row = make_row(problem, step_cfg, t, x, hg);
      if (carry_y) step_cfg.y0 = hg.y_final;
      if (cfg.record_timing) row.wall_ms = elapsed_ms();
      rec.iterations.push_back(std::move(row));
      const Vector next = outer_step(x, hg.gradient, rec.lambda,
                                     problem.region_x());
      const double moved = (next - x).norm();
      x = next;
      if (moved <= cfg.stop_tol) {
        rec.status = RunStatus::converged;
        break;
      }
    }
    const auto hg = method_hypergradient(problem, x, step_cfg);
    rec.final_state = make_row(problem, step_cfg,
                               static_cast<int>(rec.iterations.size()), x, hg);
  } catch (const NumericalError& e) {
    rec.status = RunStatus::numerical_error;
    rec.message = e.what();
    rec.final_state.t = static_cast<int>(rec.iterations.size());
    rec.final_state.x = x;
  }
  rec.wall_seconds = elapsed_ms() / 1000.0;
  return rec;
}

}  // namespace bda
