#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "bda/errors.hpp"
#include "bda/hyperclean.hpp"
#include "bda/problems.hpp"
#include "support.hpp"

using namespace bda;
using testing_support::central_diff;
using testing_support::rel_err;

namespace {

// Derivative fields against central differences at random points.
void check_first_derivatives(const BilevelProblem& p, RngStream& rng,
                             double x_width, double y_width, int samples) {
  for (int s = 0; s < samples; ++s) {
    const Vector x = rng.uniform_vector(p.n(), -x_width, x_width);
    const Vector y = rng.uniform_vector(p.m(), -y_width, y_width);
    const double hx = 1e-6 * (1.0 + x.norm());
    const double hy = 1e-6 * (1.0 + y.norm());
    auto Fx = [&](const Vector& v) { return p.F(v, y); };
    auto Fy = [&](const Vector& v) { return p.F(x, v); };
    auto fx = [&](const Vector& v) { return p.f(v, y); };
    auto fy = [&](const Vector& v) { return p.f(x, v); };
    CHECK(rel_err(p.grad_x_F(x, y), central_diff(Fx, x, hx)) <= 1e-5);
    CHECK(rel_err(p.grad_y_F(x, y), central_diff(Fy, y, hy)) <= 1e-5);
    CHECK(rel_err(p.grad_x_f(x, y), central_diff(fx, x, hx)) <= 1e-5);
    CHECK(rel_err(p.grad_y_f(x, y), central_diff(fy, y, hy)) <= 1e-5);
  }
}

// Hessian blocks against differences of the analytic gradients.
void check_hessians(const BilevelProblem& p, RngStream& rng, double x_width,
                    double y_width, int samples) {
  for (int s = 0; s < samples; ++s) {
    const Vector x = rng.uniform_vector(p.n(), -x_width, x_width);
    const Vector y = rng.uniform_vector(p.m(), -y_width, y_width);
    const Vector v = rng.normal_vector(p.m());
    const Matrix Hyy_f = p.hess_yy_f(x, y);
    const Matrix Hyx_f = p.hess_yx_f(x, y);
    const Matrix Hyy_F = p.hess_yy_F(x, y);
    const Matrix Hyx_F = p.hess_yx_F(x, y);
    const double h = 1e-5;
    Matrix num_yy_f(p.m(), p.m()), num_yy_F(p.m(), p.m());
    for (Eigen::Index j = 0; j < p.m(); ++j) {
      Vector yp = y, ym = y;
      yp[j] += h;
      ym[j] -= h;
      num_yy_f.col(j) = (p.grad_y_f(x, yp) - p.grad_y_f(x, ym)) / (2 * h);
      num_yy_F.col(j) = (p.grad_y_F(x, yp) - p.grad_y_F(x, ym)) / (2 * h);
    }
    Matrix num_yx_f(p.m(), p.n()), num_yx_F(p.m(), p.n());
    for (Eigen::Index j = 0; j < p.n(); ++j) {
      Vector xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      num_yx_f.col(j) = (p.grad_y_f(xp, y) - p.grad_y_f(xm, y)) / (2 * h);
      num_yx_F.col(j) = (p.grad_y_F(xp, y) - p.grad_y_F(xm, y)) / (2 * h);
    }
    auto close = [](const Matrix& a, const Matrix& b) {
      return (a - b).norm() <= 1e-5 * std::max(1.0, b.norm());
    };
    CHECK(close(Hyy_f, num_yy_f));
    CHECK(close(Hyx_f, num_yx_f));
    CHECK(close(Hyy_F, num_yy_F));
    CHECK(close(Hyx_F, num_yx_F));
    CHECK(rel_err(p.hess_yy_f_times(x, y, v), Hyy_f * v) <= 1e-12);
    CHECK(rel_err(p.hess_yy_F_times(x, y, v), Hyy_F * v) <= 1e-12);
    CHECK(rel_err(p.hess_yx_f_transpose_times(x, y, v),
                  Hyx_f.transpose() * v) <= 1e-12);
    CHECK(rel_err(p.hess_yx_F_transpose_times(x, y, v),
                  Hyx_F.transpose() * v) <= 1e-12);
  }
}

}  // namespace

TEST_CASE("counterexample optimum and lower-level value") {
  const auto p = make_counterexample(1);
  const Vector e = Vector::Ones(1);
  Vector w(2);
  w << 1.0, 1.0;
  CHECK(p->F(e, w) == 0.0);
  CHECK(*p->optimal_x() == e);
  CHECK(*p->optimal_y() == w);
  CHECK(*p->ll_value(e) == doctest::Approx(-0.5));
  CHECK_THROWS_AS(make_counterexample(0), ContractViolation);
}

TEST_CASE("counterexample f does not depend on z") {
  const auto p = make_counterexample(3);
  RngStream rng(11);
  for (int s = 0; s < 20; ++s) {
    const Vector x = rng.uniform_vector(3, -2, 2);
    Vector w = rng.uniform_vector(6, -2, 2);
    const double before = p->f(x, w);
    w.tail(3) = rng.uniform_vector(3, -50, 50);
    CHECK(p->f(x, w) == before);
  }
}

TEST_CASE("counterexample value function is ||x - e||^4") {
  const auto p = make_counterexample(2);
  Vector x(2);
  x << 0.3, -1.2;
  const double d2 = (x - Vector::Ones(2)).squaredNorm();
  CHECK(*p->value_function(x) == doctest::Approx(d2 * d2));
  const Vector w = *p->ll_solution(x);
  CHECK(p->F(x, w) == doctest::Approx(d2 * d2));
  CHECK(p->grad_y_f(x, w).norm() == 0.0);
}

TEST_CASE("counterexample derivatives match finite differences") {
  RngStream rng(12);
  const auto p = make_counterexample(3);
  check_first_derivatives(*p, rng, 2.0, 2.0, 10);
  check_hessians(*p, rng, 2.0, 2.0, 5);
}

TEST_CASE("remark1 analytic data") {
  const auto p = make_remark1();
  CHECK((*p->optimal_x())[0] == 1.0);
  CHECK(*p->optimal_y() == Vector{{1.0, 1.0}});
  RngStream rng(13);
  check_first_derivatives(*p, rng, 3.0, 3.0, 10);
  check_hessians(*p, rng, 3.0, 3.0, 3);
}

TEST_CASE("remark1 RHG optimum never exceeds one half") {
  for (double s : {0.01, 0.1, 0.5, 0.9}) {
    for (int K : {1, 5, 20, 200}) {
      CHECK(remark1_rhg_optimum(s, K) <= 0.5);
    }
  }
  const double a = 1.0 - std::pow(0.9, 20);
  CHECK(remark1_contraction(0.1, 20) == doctest::Approx(a).epsilon(1e-14));
  CHECK(remark1_rhg_optimum(0.1, 20) ==
        doctest::Approx(a / (1 + a * a)).epsilon(1e-14));
}

TEST_CASE("remark1 RHG optimum minimizes phi_K on a fine grid") {
  // phi_K(x) = 1/2 x^2 + 1/2 (a x - 1)^2 under plain descent from 0.
  const double a = remark1_contraction(0.1, 20);
  const auto p = make_remark1();
  double best = 1e300, arg = 0.0;
  const int N = 10000;
  for (int i = 0; i < N; ++i) {
    const double x = -100.0 + 200.0 * i / (N - 1);
    const Vector y{{a * x, 0.0}};
    const double v = p->F(Vector::Constant(1, x), y);
    if (v < best) {
      best = v;
      arg = x;
    }
  }
  CHECK(std::abs(arg - remark1_rhg_optimum(0.1, 20)) <= 200.0 / (N - 1));
}

TEST_CASE("remark1 with lower-level ridge") {
  const auto p = make_remark1(0.5);
  CHECK(*p->strong_convexity_f() == doctest::Approx(0.5));
  CHECK((*p->optimal_x())[0] == doctest::Approx(0.5));
}

TEST_CASE("lls quadratic scalar example") {
  LlsQuadraticData d{Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 1.0),
                     Vector::Constant(1, 1.0), 0.0};
  const auto p = make_lls_quadratic(d);
  const Vector x = Vector::Constant(1, 4.0);
  CHECK((*p->ll_solution(x))[0] == doctest::Approx(2.0));
  CHECK((*p->value_function_gradient(x))[0] == doctest::Approx(0.5));
}

TEST_CASE("lls quadratic with B = 0 is decoupled") {
  LlsQuadraticData d{Matrix::Identity(2, 2) * 3.0, Matrix::Zero(2, 2),
                     Vector::Ones(2), 0.7};
  const auto p = make_lls_quadratic(d);
  const Vector x{{1.5, -2.0}};
  CHECK(rel_err(*p->value_function_gradient(x), 0.7 * x) <= 1e-15);
}

TEST_CASE("random lls quadratic invariants") {
  const auto p = make_lls_quadratic(4, 6, 99);
  RngStream rng(14);
  for (int s = 0; s < 10; ++s) {
    const Vector x = rng.uniform_vector(4, -5, 5);
    const Vector ys = *p->ll_solution(x);
    CHECK(p->grad_y_f(x, ys).norm() <= 1e-10);
    const Vector y = rng.uniform_vector(6, -5, 5);
    CHECK(*p->ll_value(x) <= p->f(x, y) + 1e-12);
  }
  const Matrix H = p->hess_yy_f(Vector::Zero(4), Vector::Zero(6));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(H);
  CHECK(std::abs(*p->strong_convexity_f() - eig.eigenvalues().minCoeff()) <=
        1e-10);
  check_first_derivatives(*p, rng, 3.0, 3.0, 5);
  check_hessians(*p, rng, 3.0, 3.0, 3);
  // Value-function gradient against differences of phi.
  const Vector x = rng.uniform_vector(4, -2, 2);
  auto phi = [&](const Vector& v) { return *p->value_function(v); };
  CHECK(rel_err(*p->value_function_gradient(x), central_diff(phi, x, 1e-5)) <=
        1e-6);
}

TEST_CASE("lls quadratic rejects indefinite A") {
  LlsQuadraticData d{Matrix{{1.0, 0.0}, {0.0, -1.0}}, Matrix::Identity(2, 1),
                     Vector::Zero(2), 0.0};
  CHECK_THROWS_AS(make_lls_quadratic(d), ContractViolation);
}

TEST_CASE("hypercleaning weighting identities") {
  HypercleanConfig cfg;
  cfg.n_train = 40;
  cfg.n_val = 20;
  cfg.n_test = 20;
  cfg.corruption_fraction = 0.25;
  cfg.seed = 3;
  const auto p = make_hypercleaning(cfg);
  const auto& data = p->data();
  CHECK(p->n() == 40);
  CHECK(p->m() == cfg.feature_dim * cfg.num_classes + cfg.num_classes);
  int corrupted = 0;
  for (auto c : data.train.corrupted) corrupted += c ? 1 : 0;
  CHECK(corrupted == 10);
  for (int i = 0; i < 40; ++i) {
    if (data.train.corrupted[i]) {
      CHECK(data.train.labels[i] != data.train.true_labels[i]);
    } else {
      CHECK(data.train.labels[i] == data.train.true_labels[i]);
    }
  }

  RngStream rng(4);
  const Vector y = rng.normal_vector(p->m());
  const Vector big = Vector::Constant(40, 800.0);  // sigmoid == 1
  const Vector ones = Vector::Ones(40);
  CHECK(p->f(big, y) == doctest::Approx(p->weighted_loss(y, data.train, ones)));

  Vector mask_x(40), clean(40);
  for (int i = 0; i < 40; ++i) {
    mask_x[i] = data.train.corrupted[i] ? -800.0 : 800.0;
    clean[i] = data.train.corrupted[i] ? 0.0 : 1.0;
  }
  CHECK(p->f(mask_x, y) ==
        doctest::Approx(p->weighted_loss(y, data.train, clean)));

  const Vector x = rng.normal_vector(40);
  const Vector gx = p->grad_x_f(x, y);
  for (int i = 0; i < 40; ++i) {
    const double s = sigmoid(x[i]);
    CHECK(gx[i] == doctest::Approx(s * (1 - s) *
                                   p->sample_loss(y, data.train.features, i,
                                                  data.train.labels[i])));
  }
}

TEST_CASE("hypercleaning derivatives match finite differences") {
  HypercleanConfig cfg;
  cfg.n_train = 15;
  cfg.n_val = 10;
  cfg.n_test = 5;
  cfg.feature_dim = 3;
  cfg.ul_ridge = 0.1;
  const auto p = make_hypercleaning(cfg);
  RngStream rng(21);
  check_first_derivatives(*p, rng, 2.0, 1.0, 4);
  check_hessians(*p, rng, 2.0, 1.0, 2);
}

TEST_CASE("hypercleaning dataset csv round trip") {
  HypercleanConfig cfg;
  cfg.n_train = 12;
  cfg.n_val = 6;
  cfg.n_test = 6;
  const auto data = make_hyperclean_data(cfg);
  const auto path =
      std::filesystem::temp_directory_path() / "bda_test_dataset.csv";
  write_dataset_csv(data, path);
  const auto back = read_dataset_csv(path, cfg.num_classes);
  CHECK(back.train.features == data.train.features);
  CHECK(back.val.labels == data.val.labels);
  CHECK(back.train.corrupted == data.train.corrupted);
  std::filesystem::remove(path);
}

TEST_CASE("hypercleaning config validation") {
  HypercleanConfig cfg;
  cfg.corruption_fraction = 1.0;
  CHECK_THROWS(make_hyperclean_data(cfg));
  cfg.corruption_fraction = 0.1;
  cfg.n_train = 0;
  CHECK_THROWS(make_hyperclean_data(cfg));
}
