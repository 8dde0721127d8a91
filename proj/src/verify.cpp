#include "bda/verify.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "bda/errors.hpp"
#include "bda/hypergrad.hpp"

namespace bda {

Vector fd_gradient(const ScalarMap& map, const Vector& x, double eps) {
  if (!(eps > 0.0)) throw ContractViolation("fd_gradient: eps must be > 0");
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    const double fp = map(xp), fm = map(xm);
    require_finite(fp, "fd_gradient map(x + eps e_i)");
    require_finite(fm, "fd_gradient map(x - eps e_i)");
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

GridMin grid_argmin(const std::function<double(double)>& map, double lo,
                    double hi, long points) {
  if (points < 2) throw ContractViolation("grid_argmin: points must be >= 2");
  if (!(lo < hi)) throw ContractViolation("grid_argmin: empty interval");
  GridMin best{lo, std::numeric_limits<double>::infinity()};
  const double h = (hi - lo) / static_cast<double>(points - 1);
  for (long i = 0; i < points; ++i) {
    const double x = i + 1 == points ? hi : lo + h * static_cast<double>(i);
    const double v = map(x);
    if (v < best.value) best = {x, v};
  }
  return best;
}

std::string CheckReport::status() const {
  if (!hypothesis_breaches.empty()) return "hypothesis-breach";
  return passed ? "pass" : "fail";
}

std::string CheckReport::to_json() const {
  nlohmann::json j;
  j["check_name"] = check_name;
  j["status"] = status();
  j["worst_margin"] = worst_margin;
  j["location"] = location;
  j["evaluated"] = evaluated;
  j["hypothesis_breaches"] = hypothesis_breaches;
  j["violations"] = violations;
  return j.dump(2);
}

namespace {

Vector random_vertex(RngStream& rng, const BoxRegion& box) {
  Vector v(box.dim());
  for (Eigen::Index i = 0; i < box.dim(); ++i) {
    v[i] = rng.uniform() < 0.5 ? *box.lower()[i] : *box.upper()[i];
  }
  return v;
}

Vector mirror(const Vector& v, const BoxRegion& box) {
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out[i] = *box.lower()[i] + *box.upper()[i] - v[i];
  }
  return out;
}

// Uniform points and vertices in alternation.
Vector sample_box(RngStream& rng, const BoxRegion& box, int i) {
  return i % 2 == 0 ? sample_in_region(rng, box, 0.0) : random_vertex(rng, box);
}

double require_constant(const std::optional<double>& v, const char* what) {
  if (!v) throw CapabilityError(std::string("problem does not declare ") + what);
  return *v;
}

}  // namespace

RateConstants compute_rate_constants(const BilevelProblem& problem,
                                     const AggregationSchedule& sched,
                                     const Vector& x, int sample_density,
                                     std::uint64_t seed) {
  const auto& X = problem.region_x();
  const auto& Y = problem.region_y();
  if (!X.is_compact() || !Y.is_compact()) {
    throw CapabilityError("compute_rate_constants: X and Y must be compact");
  }
  if (sample_density < 2) {
    throw ContractViolation("compute_rate_constants: sample_density < 2");
  }
  RateConstants c;
  c.L_F = require_constant(problem.lipschitz_F(), "L_F");
  c.L_f = require_constant(problem.lipschitz_f(), "L_f");
  c.M0 = require_constant(problem.lower_bound_F(), "a lower bound M0 of F");
  c.phi = require_constant(problem.value_function(x), "phi(x)");
  c.beta_lower = sched.beta_lower();
  c.c_beta = sched.beta_rule == BetaRule::declining ? sched.c_beta : 0.0;
  c.s_l = sched.s_l;
  c.s_u = sched.s_u;
  c.mu = sched.mu;

  RngStream rng(seed);
  double D = 0.0, MF = 0.0, Mf = 0.0;
  for (int i = 0; i < sample_density; ++i) {
    const Vector xs = sample_box(rng, X, i);
    const Vector ys = sample_box(rng, Y, i / 2);
    const Vector yo = sample_in_region(rng, Y, 0.0);
    D = std::max({D, (ys - mirror(ys, Y)).norm(), (ys - yo).norm()});
    MF = std::max(MF, problem.grad_y_F(xs, ys).norm());
    Mf = std::max(Mf, problem.grad_y_f(xs, ys).norm());
  }
  const double inflate = kTolerances.sup_inflation;
  c.D = inflate * D;
  c.M_F = inflate * MF;
  c.M_f = inflate * Mf;

  const double bl = c.beta_lower;
  c.C0 = std::max(2.0 + c.c_beta * c.c_beta / (bl * bl), 3.0);
  const double head = c.D * c.D + 2.0 * c.s_u * (c.phi - c.M0);
  const double denom =
      std::min({1.0 - c.s_l * c.L_f, 1.0 - c.s_u * c.L_F, 1.0});
  c.C1 = (c.C0 * head + 2.0 * c.mu * c.s_u * c.D * c.M_F +
          2.0 * (1.0 - c.mu) * c.s_l * c.c_beta * c.D * c.M_f) /
         denom;
  c.C2 = (c.s_l * c.s_l * c.L_f * c.L_f * c.D + 4.0 * c.D * c.L_f / bl) *
         std::sqrt(c.C1);
  c.C3 = head / ((1.0 - c.mu) * (1.0 - c.s_l * c.L_f));
  return c;
}

CheckReport check_rate_bound(const BilevelProblem& problem, const Vector& x,
                             const AggregationSchedule& sched, int k_max,
                             const RateConstants& constants) {
  if (sched.alpha_rule != AlphaRule::harmonic) {
    throw ContractViolation("check_rate_bound: requires alpha_k = 1/(k+1)");
  }
  if (k_max < 2) throw ContractViolation("check_rate_bound: k_max < 2");
  const double fmin = require_constant(problem.ll_value(x), "min f");

  CheckReport rep;
  rep.check_name = "rate_bound";
  rep.hypothesis_breaches = sched.hypothesis_breaches(problem);
  rep.worst_margin = std::numeric_limits<double>::infinity();

  const auto inner = run_inner(problem, x, k_max + 1, sched, InnerMode::bda);
  const auto& recs = inner.trace.records;
  const auto& c = constants;
  const double bl2 = c.beta_lower * c.beta_lower;
  const double lead = 2.0 * c.C2 + c.C3;
  for (int k = 2; k <= k_max; ++k) {
    const double decay = (1.0 + std::log(static_cast<double>(k))) /
                         std::pow(static_cast<double>(k), 0.25);
    const Vector& yk = recs[k].y;
    const Vector& zl = recs[k + 1].z_l;
    const double dist2 = (yk - zl).squaredNorm();
    const double bound_dist = lead / bl2 * decay;
    const double gap = problem.f(x, zl) - fmin;
    const double bound_gap = c.D / (bl2 * c.s_l) * std::sqrt(lead * decay);
    for (const auto& [name, lhs, rhs] :
         {std::tuple{"distance", dist2, bound_dist},
          std::tuple{"f-gap", gap, bound_gap}}) {
      const double margin = rhs - lhs;
      ++rep.evaluated;
      if (margin < rep.worst_margin) {
        rep.worst_margin = margin;
        rep.location = std::string(name) + " k=" + std::to_string(k);
      }
      if (margin < 0.0) {
        rep.passed = false;
        std::ostringstream msg;
        msg << name << " k=" << k << " margin=" << margin;
        rep.violations.push_back(msg.str());
      }
    }
  }
  return rep;
}

CheckReport check_descent_inequality(const BilevelProblem& problem,
                                     const Vector& x, const InnerTrace& trace,
                                     const AggregationSchedule& sched,
                                     int num_test_points, std::uint64_t seed) {
  const auto& recs = trace.records;
  if (recs.size() < 2) {
    throw ContractViolation("check_descent_inequality: trace has no steps");
  }
  const double LF = require_constant(problem.lipschitz_F(), "L_F");
  const double Lf = require_constant(problem.lipschitz_f(), "L_f");

  CheckReport rep;
  rep.check_name = "descent_inequality";
  rep.hypothesis_breaches = sched.hypothesis_breaches(problem);
  rep.worst_margin = std::numeric_limits<double>::infinity();

  const double mu = sched.mu, su = sched.s_u, sl = sched.s_l;
  auto slack = [&](std::size_t k, const Vector& yt) {
    const Vector& yk = recs[k].y;
    const auto& nx = recs[k + 1];
    const double a = nx.alpha, b = nx.beta;
    const double wF = mu * su * a / sl;
    const double wf = (1.0 - mu) * b;
    const double lhs = wf * problem.f(x, yt) + wF * problem.F(x, yt);
    const Vector comb = (1.0 - mu) * nx.z_l + mu * nx.z_u;
    const double rhs =
        wf * problem.f(x, nx.z_l) + wF * problem.F(x, nx.z_u) +
        mu / (2 * sl) * (1.0 - a * su * LF) * (yk - nx.z_u).squaredNorm() +
        1.0 / (2 * sl) * (yt - nx.y).squaredNorm() +
        1.0 / (2 * sl) * (comb - nx.y).squaredNorm() +
        (1.0 - mu) / (2 * sl) * (1.0 - b * sl * Lf) *
            (yk - nx.z_l).squaredNorm() -
        1.0 / (2 * sl) * (yt - yk).squaredNorm();
    return lhs - rhs;
  };
  auto record = [&](std::size_t k, double s, const std::string& what) {
    ++rep.evaluated;
    if (s < rep.worst_margin) {
      rep.worst_margin = s;
      rep.location = "k=" + std::to_string(k) + " " + what;
    }
    if (s < kTolerances.descent_slack) {
      rep.passed = false;
      std::ostringstream msg;
      msg << "k=" << k << " " << what << " slack=" << s;
      rep.violations.push_back(msg.str());
    }
  };

  const std::size_t steps = recs.size() - 1;
  double width = 1.0;
  for (const auto& r : recs) width = std::max(width, 1.0 + r.y.lpNorm<Eigen::Infinity>());
  for (std::size_t k = 0; k < steps; ++k) record(k, slack(k, recs[k].y), "y~=y_k");
  RngStream rng(seed);
  for (int i = 0; i < num_test_points; ++i) {
    const auto k = static_cast<std::size_t>(rng.below(steps));
    const Vector yt = sample_in_region(rng, problem.region_y(), width);
    record(k, slack(k, yt), "sample " + std::to_string(i));
  }
  return rep;
}

CheckReport check_nonexpansive(const InnerTrace& trace,
                               const std::vector<Vector>& ybars) {
  CheckReport rep;
  rep.check_name = "nonexpansive";
  rep.worst_margin = std::numeric_limits<double>::infinity();
  const auto& recs = trace.records;
  for (std::size_t j = 0; j < ybars.size(); ++j) {
    for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
      const auto& zl = recs[k + 1].z_l;
      if (zl.size() == 0) {
        throw ContractViolation("check_nonexpansive: trace lacks z^l");
      }
      const double margin = (recs[k].y - ybars[j]).norm() -
                            (zl - ybars[j]).norm();
      ++rep.evaluated;
      if (margin < rep.worst_margin) {
        rep.worst_margin = margin;
        rep.location = "k=" + std::to_string(k) + " ybar#" + std::to_string(j);
      }
      if (margin < -kTolerances.nonexpansive_slack) {
        rep.passed = false;
        std::ostringstream msg;
        msg << "k=" << k << " ybar#" << j << " margin=" << margin;
        rep.violations.push_back(msg.str());
      }
    }
  }
  return rep;
}

std::vector<double> check_stationarity(const BilevelProblem& problem,
                                       const std::vector<Vector>& grid,
                                       const AggregationSchedule& sched,
                                       const std::vector<int>& k_list) {
  std::vector<Vector> truth;
  for (const auto& x : grid) {
    auto g = problem.value_function_gradient(x);
    if (!g) {
      throw CapabilityError(
          "check_stationarity: problem has no analytic value-function gradient");
    }
    truth.push_back(*g);
  }
  std::vector<double> out;
  for (int k : k_list) {
    double worst = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto hg = hypergrad_forward(problem, grid[i], k, sched,
                                        InnerMode::bda);
      worst = std::max(worst, (hg.gradient - truth[i]).norm());
    }
    out.push_back(worst);
  }
  return out;
}

RhgLimit rhg_limit_oracle_counterexample(double s_l, int K) {
  if (!(s_l > 0.0 && s_l < 1.0) || K < 1) {
    throw ContractViolation("rhg_limit_oracle: need s_l in (0,1) and K >= 1");
  }
  RhgLimit out;
  out.a = 1.0 - std::pow(1.0 - s_l, K);
  const double a = out.a;
  auto g = [a](double t) {
    const double u = a * t - 1.0;
    return t * t * t + a * u * u * u;
  };
  double lo = 0.0, hi = 1.0;
  if (!(g(lo) <= 0.0 && g(hi) > 0.0)) {
    throw NumericalError("rhg_limit_oracle: root not bracketed on [0, 1]");
  }
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (g(mid) <= 0.0 ? lo : hi) = mid;
  }
  out.x_hat = std::abs(g(lo)) <= std::abs(g(hi)) ? lo : hi;
  out.residual = std::abs(g(out.x_hat));
  if (out.residual > kTolerances.oracle_residual) {
    throw NumericalError("rhg_limit_oracle: residual above tolerance");
  }
  return out;
}

double log_log_slope(const std::vector<double>& eps,
                     const std::vector<double>& err) {
  if (eps.size() != err.size() || eps.size() < 2) {
    throw ContractViolation("log_log_slope: need >= 2 paired samples");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0) || !(err[i] > 0.0)) {
      throw NumericalError("log_log_slope: non-positive sample");
    }
    const double lx = std::log(eps[i]), ly = std::log(err[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace bda
