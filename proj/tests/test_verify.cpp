#include "doctest.h"

#include <cmath>

#include <json.hpp>

#include "bda/errors.hpp"
#include "bda/hypergrad.hpp"
#include "bda/problems.hpp"
#include "bda/verify.hpp"

using namespace bda;

namespace {

ProblemPtr boxed_counterexample(int n, double y_half_width) {
  CounterexampleOptions o;
  o.n = n;
  o.x_half_width = 1.0;
  o.y_half_width = y_half_width;
  return make_counterexample(o);
}

AggregationSchedule rate_schedule() {
  AggregationSchedule s;
  s.mu = 0.5;
  s.s_u = 1e-3;
  s.s_l = 0.5;
  s.alpha_rule = AlphaRule::harmonic;
  s.beta_param = 1.0;
  return s;
}

}  // namespace

TEST_CASE("fd_gradient is exact on quadratics") {
  const ScalarMap half_sq = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
  const Vector g = fd_gradient(half_sq, Vector::Constant(1, 3.0), 1e-5);
  CHECK(std::abs(g[0] - 3.0) <= 1e-9);
}

TEST_CASE("fd_gradient of a constant is zero") {
  const ScalarMap c = [](const Vector&) { return 4.2; };
  CHECK(fd_gradient(c, Vector::Constant(3, 1.0), 1e-4).isZero(0.0));
}

TEST_CASE("fd_gradient rejects a non-positive step") {
  const ScalarMap c = [](const Vector&) { return 0.0; };
  CHECK_THROWS(fd_gradient(c, Vector::Zero(1), 0.0));
}

TEST_CASE("fd of phi_K on remark1 matches reverse mode") {
  const auto p = make_remark1();
  AggregationSchedule s;
  s.s_l = 0.1;
  const Vector x = Vector::Constant(1, 0.4);
  const ScalarMap phi = [&](const Vector& xx) {
    return p->F(xx, run_inner(*p, xx, 20, s, InnerMode::plain).y);
  };
  const Vector fd = fd_gradient(phi, x, 1e-6);
  const auto hg = hypergrad_reverse(*p, x, 20, s, InnerMode::plain);
  CHECK((fd - hg.gradient).norm() / hg.gradient.norm() <= 1e-5);
}

TEST_CASE("grid_argmin finds the parabola vertex") {
  const auto r = grid_argmin([](double x) { return (x - 1.0) * (x - 1.0); }, -2.0,
                             2.0, 401);
  CHECK(r.x_min == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.value <= 1e-24);
}

TEST_CASE("grid_argmin on monotone and constant maps") {
  CHECK(grid_argmin([](double x) { return x; }, -3.0, 5.0, 17).x_min == -3.0);
  CHECK(grid_argmin([](double x) { return -x; }, -3.0, 5.0, 17).x_min == 5.0);
  CHECK(grid_argmin([](double) { return 1.0; }, -3.0, 5.0, 17).x_min == -3.0);
  CHECK_THROWS(grid_argmin([](double x) { return x; }, 0.0, 1.0, 1));
}

TEST_CASE("grid_argmin of remark1 phi_K near the closed form") {
  const auto p = make_remark1();
  AggregationSchedule s;
  s.s_l = 0.1;
  const long points = 20001;
  const auto r = grid_argmin(
      [&](double t) {
        const Vector x = Vector::Constant(1, t);
        return p->F(x, run_inner(*p, x, 20, s, InnerMode::plain).y);
      },
      -1.0, 1.0, points);
  const double spacing = 2.0 / double(points - 1);
  CHECK(std::abs(r.x_min - remark1_rhg_optimum(0.1, 20)) <= spacing);
}

TEST_CASE("C0 with c_beta = 0 is 3") {
  const auto p = boxed_counterexample(1, 1.0);
  const auto c = compute_rate_constants(*p, rate_schedule(), Vector::Constant(1, 0.5),
                                        2000);
  CHECK(c.C0 == 3.0);
  CHECK(c.C1 > 0.0);
  CHECK(c.C2 > 0.0);
  CHECK(c.C3 > 0.0);
}

TEST_CASE("sampled diameter of [-1, 1]^2") {
  const auto p = boxed_counterexample(1, 1.0);
  const auto c = compute_rate_constants(*p, rate_schedule(), Vector::Constant(1, 0.5),
                                        2000);
  const double diam = 2.0 * std::sqrt(2.0);
  CHECK(c.D >= 0.95 * diam);
  CHECK(c.D <= kTolerances.sup_inflation * diam + 1e-12);
}

TEST_CASE("doubling s_u does not decrease C3") {
  const auto p = boxed_counterexample(2, 2.0);
  auto s = rate_schedule();
  const Vector x = Vector::Constant(2, 0.5);
  const auto a = compute_rate_constants(*p, s, x, 2000);
  s.s_u *= 2.0;
  const auto b = compute_rate_constants(*p, s, x, 2000);
  CHECK(b.C3 >= a.C3);
}

TEST_CASE("rate constants need compact regions") {
  const auto p = make_remark1();
  CHECK_THROWS(compute_rate_constants(*p, rate_schedule(), Vector::Constant(1, 0.5),
                                      100));
}

TEST_CASE("rate bound holds on the counterexample and the control fails") {
  const auto p = boxed_counterexample(5, 2.0);
  const auto s = rate_schedule();
  const Vector x = Vector::Constant(5, 0.5);
  const auto c = compute_rate_constants(*p, s, x, 20000, 3);
  const auto ok = check_rate_bound(*p, x, s, 500, c);
  CHECK(ok.status() == "pass");
  CHECK(ok.violations.empty());
  CHECK(ok.evaluated > 0);

  auto bad = c;
  bad.C2 *= 1e-6;
  bad.C3 *= 1e-6;
  const auto r = check_rate_bound(*p, x, s, 500, bad);
  CHECK(r.status() == "fail");
  CHECK(!r.violations.empty());
}

TEST_CASE("rate bound requires the harmonic alpha rule") {
  const auto p = boxed_counterexample(1, 1.0);
  auto s = rate_schedule();
  const Vector x = Vector::Constant(1, 0.5);
  const auto c = compute_rate_constants(*p, s, x, 500);
  s.alpha_rule = AlphaRule::constant;
  s.alpha_param = 0.5;
  CHECK_THROWS_AS(check_rate_bound(*p, x, s, 10, c), ContractViolation);
}

TEST_CASE("descent inequality on lls_quadratic") {
  const auto p = make_lls_quadratic(3, 4, 1);
  AggregationSchedule s;
  s.mu = 0.3;
  s.s_u = 0.5 / *p->lipschitz_F();
  s.s_l = 0.5 / *p->lipschitz_f();
  s.alpha_rule = AlphaRule::harmonic;
  const Vector x = Vector::Ones(3);
  const auto tr = run_inner(*p, x, 50, s, InnerMode::bda);
  const auto rep = check_descent_inequality(*p, x, tr.trace, s, 100, 1);
  CHECK(rep.status() == "pass");
  CHECK(rep.worst_margin >= kTolerances.descent_slack);
  CHECK(rep.evaluated >= 150);
}

TEST_CASE("descent inequality flags a step size above 1/L_f") {
  const auto p = make_lls_quadratic(3, 4, 1);
  AggregationSchedule s;
  s.mu = 0.3;
  s.s_u = 0.5 / *p->lipschitz_F();
  s.s_l = 2.0 / *p->lipschitz_f();
  s.alpha_rule = AlphaRule::harmonic;
  const Vector x = Vector::Ones(3);
  const auto tr = run_inner(*p, x, 20, s, InnerMode::bda);
  const auto rep = check_descent_inequality(*p, x, tr.trace, s, 20, 1);
  CHECK(rep.status() == "hypothesis-breach");
  CHECK(!rep.hypothesis_breaches.empty());
}

TEST_CASE("nonexpansive check on remark1 with every ybar in S(x)") {
  const auto p = make_remark1();
  AggregationSchedule s;
  s.mu = 0.2;
  s.s_u = 0.5;
  s.s_l = 0.5;
  s.alpha_rule = AlphaRule::harmonic;
  const Vector x = Vector::Constant(1, 0.8);
  const auto tr = run_inner(*p, x, 30, s, InnerMode::bda);
  std::vector<Vector> ybars;
  for (double t : {-3.0, 0.0, 0.8, 5.0}) ybars.push_back(Vector{{0.8, t}});
  const auto rep = check_nonexpansive(tr.trace, ybars);
  CHECK(rep.status() == "pass");
  CHECK(rep.evaluated == 30 * 4);
}

TEST_CASE("nonexpansive check reports a point outside S(x)") {
  const auto p = make_remark1();
  AggregationSchedule s;
  s.mu = 0.2;
  s.s_u = 0.5;
  s.s_l = 0.5;
  s.alpha_rule = AlphaRule::harmonic;
  const Vector x = Vector::Constant(1, 0.8);
  const auto tr = run_inner(*p, x, 10, s, InnerMode::bda);
  // Any point far from the iterates on the y1 axis: contraction toward 0.8
  // moves iterates away from it.
  const auto rep = check_nonexpansive(tr.trace, {Vector{{-50.0, 0.0}}});
  CHECK(rep.status() == "fail");
}

TEST_CASE("stationarity error vanishes when B = 0") {
  LlsQuadraticData d;
  d.A = 2.0 * Matrix::Identity(2, 2);
  d.B = Matrix::Zero(2, 1);
  d.b = Vector{{1.0, -1.0}};
  d.rho = 0.3;
  const auto p = make_lls_quadratic(d);
  AggregationSchedule s;
  s.alpha_rule = AlphaRule::harmonic;
  std::vector<Vector> grid;
  for (double t : {-2.0, 0.0, 3.0}) grid.push_back(Vector::Constant(1, t));
  for (double e : check_stationarity(*p, grid, s, {0, 1, 5})) CHECK(e == 0.0);
}

TEST_CASE("stationarity at k = 0 is the partial-gradient gap") {
  const auto p = make_lls_quadratic(1, 3, 5);
  AggregationSchedule s;
  s.alpha_rule = AlphaRule::harmonic;
  std::vector<Vector> grid;
  for (double t : {-1.0, 0.5, 2.0}) grid.push_back(Vector::Constant(1, t));
  double expected = 0.0;
  const Vector y0 = default_initial_point(*p);
  for (const auto& x : grid) {
    expected = std::max(expected,
                        (p->grad_x_F(x, y0) - *p->value_function_gradient(x)).norm());
  }
  const auto errs = check_stationarity(*p, grid, s, {0});
  CHECK(errs[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("stationarity sequence on lls_quadratic") {
  const auto p = make_lls_quadratic(1, 3, 5);
  AggregationSchedule s;
  s.mu = 0.1;
  s.s_u = 0.5 / *p->lipschitz_F();
  s.s_l = 0.5 / *p->lipschitz_f();
  s.alpha_rule = AlphaRule::harmonic;
  std::vector<Vector> grid;
  for (int i = 0; i < 11; ++i) grid.push_back(Vector::Constant(1, -5.0 + i));
  const auto e = check_stationarity(*p, grid, s, {10, 100, 1000});
  CHECK(e[1] < e[0]);
  CHECK(e[2] < e[1]);
  CHECK(e[2] <= kTolerances.stationarity_target);
}

TEST_CASE("RHG limit oracle residual and non-optimality") {
  for (double sl : {0.01, 0.1, 0.5, 0.9}) {
    for (int K : {1, 5, 20, 200}) {
      const auto r = rhg_limit_oracle_counterexample(sl, K);
      CHECK(r.residual <= kTolerances.oracle_residual);
      CHECK(r.x_hat < 1.0);
      CHECK(r.x_hat > 0.0);
      const double t = r.x_hat, a = r.a;
      CHECK(std::abs(t * t * t + a * std::pow(a * t - 1.0, 3)) <= 1e-12);
    }
  }
}

TEST_CASE("RHG limit for n = 50, K = 20, s_l = 0.1") {
  const auto r = rhg_limit_oracle_counterexample(0.1, 20);
  CHECK(r.a == doctest::Approx(1.0 - std::pow(0.9, 20)).epsilon(1e-14));
  CHECK(r.x_hat == doctest::Approx(0.5201345873).epsilon(1e-9));
}

TEST_CASE("RHG limit vanishes as a_K goes to zero") {
  const double a = rhg_limit_oracle_counterexample(1e-3, 1).x_hat;
  const double b = rhg_limit_oracle_counterexample(1e-6, 1).x_hat;
  CHECK(b < a);
  CHECK(b < 0.02);
}

TEST_CASE("1 + (a - 1)^3 a >= 3/4 on [0, 1]") {
  double worst = 1.0;
  for (int i = 0; i <= 10000; ++i) {
    const double a = i / 10000.0;
    worst = std::min(worst, 1.0 + std::pow(a - 1.0, 3) * a);
  }
  CHECK(worst >= 0.75);
}

TEST_CASE("log-log slope of a power law") {
  const std::vector<double> eps = {1e-4, 1e-3, 1e-2};
  std::vector<double> err;
  for (double e : eps) err.push_back(3.0 * e * e);
  CHECK(log_log_slope(eps, err) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("check report serializes the documented keys") {
  CheckReport r;
  r.check_name = "demo";
  r.passed = false;
  r.worst_margin = -0.5;
  r.location = "k=3";
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.at("check_name") == "demo");
  CHECK(j.at("status") == "fail");
  CHECK(j.at("worst_margin") == -0.5);
  CHECK(j.at("location") == "k=3");
  r.hypothesis_breaches.push_back("s_l");
  CHECK(r.status() == "hypothesis-breach");
}
