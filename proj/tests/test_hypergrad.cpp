#include "doctest.h"

#include <cmath>

#include "bda/errors.hpp"
#include "bda/hypergrad.hpp"
#include "bda/problems.hpp"
#include "support.hpp"

using namespace bda;
using testing_support::central_diff;
using testing_support::rel_err;

namespace {
AggregationSchedule reference_schedule() {
  AggregationSchedule s;
  s.mu = 0.1;
  s.s_u = 0.1;
  s.s_l = 0.1;
  s.alpha_rule = AlphaRule::scaled;
  s.alpha_param = 0.5;
  s.beta_param = 1.0;
  return s;
}

double phi_K(const BilevelProblem& p, const Vector& x, int K,
             const AggregationSchedule& s, InnerMode mode) {
  return p.F(x, run_inner(p, x, K, s, mode).y);
}

ProblemPtr scalar_lls(double rho = 0.0) {
  return make_lls_quadratic(LlsQuadraticData{Matrix::Constant(1, 1, 2.0),
                                             Matrix::Constant(1, 1, 1.0),
                                             Vector::Constant(1, 1.0), rho});
}
const Vector kOne = Vector::Constant(1, 1.0);
}  // namespace

TEST_CASE("reverse mode on remark1 with K = 2") {
  const auto p = make_remark1();
  AggregationSchedule s;
  s.s_l = 0.1;
  const auto r = hypergrad_reverse(*p, kOne, 2, s, InnerMode::plain);
  CHECK(r.gradient.size() == 1);
  CHECK(r.gradient[0] == doctest::Approx(0.8461).epsilon(1e-12));
  CHECK(r.diagnostics.unrolled_steps == 2);
  auto phi = [&](const Vector& x) { return phi_K(*p, x, 2, s, InnerMode::plain); };
  CHECK(rel_err(r.gradient, central_diff(phi, kOne, 1e-6)) <= 1e-5);
}

TEST_CASE("truncation semantics") {
  const auto p = make_lls_quadratic(3, 4, 5);
  const Vector x = Vector::LinSpaced(3, -1, 1);
  const auto s = reference_schedule();
  for (auto mode : {InnerMode::plain, InnerMode::bda}) {
    const auto full = hypergrad_reverse(*p, x, 12, s, mode);
    const auto same = hypergrad_reverse(*p, x, 12, s, mode, 12);
    CHECK(full.gradient == same.gradient);
    const auto none = hypergrad_reverse(*p, x, 12, s, mode, 0);
    CHECK(rel_err(none.gradient, p->grad_x_F(x, full.y_final)) == 0.0);
    const auto part = hypergrad_reverse(*p, x, 12, s, mode, 4);
    CHECK(part.diagnostics.truncate_at == 4);
    CHECK(part.diagnostics.unrolled_steps == 4);
  }
  CHECK_THROWS_AS(hypergrad_reverse(*p, x, 3, s, InnerMode::plain, 4),
                  ContractViolation);
}

TEST_CASE("K = 0 gives the partial UL gradient") {
  const auto p = make_counterexample(2);
  const Vector x{{0.3, 0.7}};
  const auto s = reference_schedule();
  const Vector y0 = Vector::Zero(4);
  CHECK(hypergrad_reverse(*p, x, 0, s, InnerMode::bda).gradient ==
        p->grad_x_F(x, y0));
  CHECK(hypergrad_forward(*p, x, 0, s, InnerMode::bda).gradient ==
        p->grad_x_F(x, y0));
}

TEST_CASE("forward and reverse agree on a random lls quadratic") {
  const auto p = make_lls_quadratic(3, 5, 17);
  const Vector x = Vector::LinSpaced(3, 0.5, -2);
  const auto s = reference_schedule();
  for (auto mode : {InnerMode::plain, InnerMode::bda}) {
    const auto r = hypergrad_reverse(*p, x, 10, s, mode);
    const auto f = hypergrad_forward(*p, x, 10, s, mode);
    CHECK(rel_err(f.gradient, r.gradient) <= 1e-10);
    auto phi = [&](const Vector& v) { return phi_K(*p, v, 10, s, mode); };
    CHECK(rel_err(r.gradient, central_diff(phi, x, 1e-6)) <= 1e-5);
  }
}

TEST_CASE("forward and reverse agree on the nonlinear counterexample") {
  const auto p = make_counterexample(3);
  const Vector x{{0.2, 0.9, 1.4}};
  const auto s = reference_schedule();
  const auto r = hypergrad_reverse(*p, x, 15, s, InnerMode::bda);
  const auto f = hypergrad_forward(*p, x, 15, s, InnerMode::bda);
  CHECK(rel_err(f.gradient, r.gradient) <= 1e-10);
  auto phi = [&](const Vector& v) { return phi_K(*p, v, 15, s, InnerMode::bda); };
  CHECK(rel_err(r.gradient, central_diff(phi, x, 1e-6)) <= 1e-5);
}

TEST_CASE("forward Jacobian converges to the implicit derivative") {
  // Plain recursion J <- (1 - 0.25 * 2) J + 0.25 tends to A^{-1} B = 1/2.
  const auto p = scalar_lls();
  AggregationSchedule s;
  s.s_l = 0.25;
  const Vector x = Vector::Constant(1, 4.0);
  const auto r = hypergrad_forward(*p, x, 200, s, InnerMode::plain);
  const double J = r.gradient[0] / (r.y_final[0] - 1.0);
  CHECK(J == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("strict forward mode refuses active projections") {
  CounterexampleOptions opt;
  opt.n = 2;
  opt.y_half_width = 0.3;
  const auto p = make_counterexample(opt);
  const Vector x = Vector::Constant(2, 1.0);
  const auto s = reference_schedule();
  CHECK_THROWS_AS(hypergrad_forward(*p, x, 20, s, InnerMode::bda, true),
                  CapabilityError);
  const auto f = hypergrad_forward(*p, x, 20, s, InnerMode::bda);
  const auto r = hypergrad_reverse(*p, x, 20, s, InnerMode::bda);
  CHECK(f.diagnostics.projection_active);
  CHECK(r.diagnostics.projection_active);
  CHECK(rel_err(f.gradient, r.gradient) <= 1e-10);
}

TEST_CASE("implicit hypergradient on the scalar lls example") {
  const auto p = scalar_lls();
  const Vector x = Vector::Constant(1, 4.0);
  const auto r = hypergrad_implicit(*p, x, Vector::Constant(1, 2.0));
  CHECK(r.gradient[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(*r.diagnostics.cg_residual <= 1e-10);
}

TEST_CASE("implicit hypergradient with B = 0 equals grad_x F") {
  const auto p = make_lls_quadratic(LlsQuadraticData{
      Matrix::Identity(3, 3) * 2.0, Matrix::Zero(3, 2), Vector::Ones(3), 0.4});
  const Vector x{{1.0, -3.0}};
  const Vector y{{0.2, 0.3, 0.1}};
  CHECK(hypergrad_implicit(*p, x, y).gradient == p->grad_x_F(x, y));
}

TEST_CASE("implicit hypergradient refuses the singular remark1 Hessian") {
  const auto p = make_remark1();
  CHECK_THROWS_AS(hypergrad_implicit(*p, kOne, Vector{{0.5, 0.5}}),
                  CapabilityError);
}

TEST_CASE("conjugate gradient failure modes") {
  const Matrix H = Matrix{{2.0, 0.0}, {0.0, -1.0}};
  auto apply = [&](const Vector& v) -> Vector { return H * v; };
  CHECK_THROWS_AS(conjugate_gradient(apply, Vector{{1.0, 1.0}}, 1e-10, 10),
                  CapabilityError);
  const auto p = make_lls_quadratic(1, 30, 3);
  const Matrix A = p->hess_yy_f(Vector::Zero(1), Vector::Zero(30));
  auto applyA = [&](const Vector& v) -> Vector { return A * v; };
  CHECK_THROWS_AS(conjugate_gradient(applyA, Vector::Ones(30), 1e-14, 2),
                  ConvergenceError);
  const auto ok = conjugate_gradient(applyA, Vector::Ones(30), 1e-12, 200);
  CHECK((A * ok.solution - Vector::Ones(30)).norm() <= 1e-10);
}

TEST_CASE("long unrolling approaches the implicit hypergradient") {
  const auto p = make_lls_quadratic(3, 4, 23);
  const Vector x = Vector::LinSpaced(3, -1, 2);
  AggregationSchedule s;
  s.s_l = 0.5 / *p->lipschitz_f();
  const auto r = hypergrad_reverse(*p, x, 500, s, InnerMode::plain);
  const auto i = hypergrad_implicit(*p, x, r.y_final);
  CHECK((r.gradient - i.gradient).norm() <= 1e-4 * i.gradient.norm());
  CHECK(rel_err(i.gradient, *p->value_function_gradient(x)) <= 1e-8);
}

TEST_CASE("hessian capability is checked") {
  class NoHess final : public BilevelProblem {
   public:
    NoHess() : BilevelProblem(BoxRegion::whole(1), BoxRegion::whole(1)) {}
    std::string name() const override { return "nohess"; }
    double F(const Vector&, const Vector& y) const override { return y[0]; }
    double f(const Vector& x, const Vector& y) const override {
      return 0.5 * (y[0] - x[0]) * (y[0] - x[0]);
    }
    Vector grad_x_F(const Vector&, const Vector&) const override {
      return Vector::Zero(1);
    }
    Vector grad_y_F(const Vector&, const Vector&) const override {
      return Vector::Ones(1);
    }
    Vector grad_x_f(const Vector& x, const Vector& y) const override {
      return Vector::Constant(1, x[0] - y[0]);
    }
    Vector grad_y_f(const Vector& x, const Vector& y) const override {
      return Vector::Constant(1, y[0] - x[0]);
    }
  };
  NoHess p;
  const auto s = reference_schedule();
  CHECK_THROWS_AS(hypergrad_reverse(p, kOne, 3, s, InnerMode::plain),
                  CapabilityError);
  CHECK_THROWS_AS(hypergrad_forward(p, kOne, 3, s, InnerMode::bda),
                  CapabilityError);
  CHECK_THROWS_AS(hypergrad_implicit(p, kOne, kOne), CapabilityError);
  // The one-stage scheme needs only first derivatives.
  CHECK_NOTHROW(hypergrad_onestage(p, kOne, kOne, s, 1e-4));
}

TEST_CASE("one-stage scheme matches the one-step reverse oracle on remark1") {
  const auto p = make_remark1();
  const auto s = reference_schedule();
  const Vector y0 = Vector::Zero(2);
  const auto o = hypergrad_onestage(*p, kOne, y0, s, 1e-4);
  const auto r = hypergrad_reverse(*p, kOne, 1, s, InnerMode::bda, {}, y0);
  CHECK(o.y_final == r.y_final);
  CHECK(std::abs(o.gradient[0] - r.gradient[0]) <=
        1e-3 * std::abs(r.gradient[0]));
  CHECK_FALSE(o.diagnostics.projection_active);
  CHECK(*o.diagnostics.fd_eps == 1e-4);
}

TEST_CASE("one-stage scheme with zero UL gradient at y1") {
  // Choose y0 so that y1 = (1, x), where grad_y F vanishes.
  const auto p = make_remark1();
  auto s = reference_schedule();
  s.alpha_rule = AlphaRule::zero;
  s.mu = 0.5;
  s.beta_param = 1.0;
  s.s_l = 1.0;
  // y1 = y0 - 0.5 * (y0_1 - x, 0) -> choose y0 = (1, 1) with x = 1.
  const Vector y0{{1.0, 1.0}};
  const auto o = hypergrad_onestage(*p, kOne, y0, s, 1e-300);
  CHECK(o.gradient == p->grad_x_F(kOne, o.y_final));
}

TEST_CASE("one-stage error decreases with eps on a nonlinear problem") {
  const auto p = make_counterexample(1);
  const auto s = reference_schedule();
  const Vector x = Vector::Constant(1, 2.0);
  const Vector y0 = Vector::Zero(2);
  const auto r = hypergrad_reverse(*p, x, 1, s, InnerMode::bda, {}, y0);
  double prev = 1e300;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    const auto o = hypergrad_onestage(*p, x, y0, s, eps);
    const double err = std::abs(o.gradient[0] - r.gradient[0]);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev <= 1e-4 * std::abs(r.gradient[0]));
}

TEST_CASE("one-stage projected branch tracks the masked reverse oracle") {
  CounterexampleOptions opt;
  opt.n = 2;
  opt.y_half_width = 0.5;
  const auto p = make_counterexample(opt);
  const auto s = reference_schedule();
  const Vector x{{1.5, 0.2}};
  const Vector y0{{0.49, 0.0, 0.3, 0.1}};
  const auto r = hypergrad_reverse(*p, x, 1, s, InnerMode::bda, {}, y0);
  REQUIRE(r.diagnostics.projection_active);
  const auto o = hypergrad_onestage(*p, x, y0, s, 1e-6);
  CHECK(o.diagnostics.projection_active);
  CHECK(rel_err(o.gradient, r.gradient) <= 1e-3);
}

TEST_CASE("one-stage scheme rejects bad eps") {
  const auto p = make_remark1();
  const auto s = reference_schedule();
  CHECK_THROWS_AS(hypergrad_onestage(*p, kOne, Vector::Zero(2), s, 0.0),
                  ContractViolation);
  CHECK_THROWS_AS(hypergrad_onestage(*p, kOne, Vector{{0.5, 0.5}}, s, 1e-300),
                  NumericalError);
}
