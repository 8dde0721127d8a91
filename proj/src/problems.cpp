#include "bda/problems.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bda/errors.hpp"

namespace bda {

namespace {

// Derivatives of q(v) = ||v||^4.
double quartic(const Vector& v) {
  const double sq = v.squaredNorm();
  return sq * sq;
}
Vector quartic_grad(const Vector& v) { return 4.0 * v.squaredNorm() * v; }
Matrix quartic_hess(const Vector& v) {
  Matrix h = 8.0 * v * v.transpose();
  h.diagonal().array() += 4.0 * v.squaredNorm();
  return h;
}

class Counterexample final : public BilevelProblem {
 public:
  explicit Counterexample(const CounterexampleOptions& opt)
      : BilevelProblem(BoxRegion::symmetric(opt.n, opt.x_half_width),
                       opt.y_half_width
                           ? BoxRegion::symmetric(2 * opt.n, *opt.y_half_width)
                           : BoxRegion::whole(2 * opt.n)),
        dim_(opt.n),
        x_half_width_(opt.x_half_width),
        y_half_width_(opt.y_half_width) {}

  std::string name() const override { return "counterexample"; }

  double F(const Vector& x, const Vector& w) const override {
    return quartic(x - z(w)) + quartic(y(w) - e());
  }
  double f(const Vector& x, const Vector& w) const override {
    return 0.5 * y(w).squaredNorm() - x.dot(y(w));
  }
  Vector grad_x_F(const Vector& x, const Vector& w) const override {
    return quartic_grad(x - z(w));
  }
  Vector grad_y_F(const Vector& x, const Vector& w) const override {
    Vector g(2 * dim_);
    g.head(dim_) = quartic_grad(y(w) - e());
    g.tail(dim_) = quartic_grad(z(w) - x);
    return g;
  }
  Vector grad_x_f(const Vector&, const Vector& w) const override {
    return -y(w);
  }
  Vector grad_y_f(const Vector& x, const Vector& w) const override {
    Vector g = Vector::Zero(2 * dim_);
    g.head(dim_) = y(w) - x;
    return g;
  }

  bool has_hessians_F() const override { return true; }
  bool has_hessians_f() const override { return true; }

  Matrix hess_yy_F(const Vector& x, const Vector& w) const override {
    Matrix h = Matrix::Zero(2 * dim_, 2 * dim_);
    h.topLeftCorner(dim_, dim_) = quartic_hess(y(w) - e());
    h.bottomRightCorner(dim_, dim_) = quartic_hess(z(w) - x);
    return h;
  }
  Matrix hess_yx_F(const Vector& x, const Vector& w) const override {
    Matrix h = Matrix::Zero(2 * dim_, dim_);
    h.bottomRows(dim_) = -quartic_hess(z(w) - x);
    return h;
  }
  Matrix hess_yy_f(const Vector&, const Vector&) const override {
    Matrix h = Matrix::Zero(2 * dim_, 2 * dim_);
    h.topLeftCorner(dim_, dim_).setIdentity();
    return h;
  }
  Matrix hess_yx_f(const Vector&, const Vector&) const override {
    Matrix h = Matrix::Zero(2 * dim_, dim_);
    h.topRows(dim_) = -Matrix::Identity(dim_, dim_);
    return h;
  }

  std::optional<double> lipschitz_F() const override {
    if (!y_half_width_) return std::nullopt;
    // Largest eigenvalue of quartic_hess(v) is 12 ||v||^2; bound ||v|| over
    // X x Y for both blocks.
    const double wy = *y_half_width_ + 1.0;
    const double wz = *y_half_width_ + x_half_width_;
    return 12.0 * static_cast<double>(dim_) * std::max(wy * wy, wz * wz);
  }
  std::optional<double> lipschitz_f() const override { return 1.0; }
  std::optional<double> lower_bound_F() const override { return 0.0; }

  std::optional<Vector> ll_solution(const Vector& x) const override {
    const Vector c = clamp(x);
    Vector w(2 * dim_);
    w << c, c;
    return w;
  }
  std::optional<double> ll_value(const Vector& x) const override {
    const Vector c = clamp(x);
    return 0.5 * c.squaredNorm() - x.dot(c);
  }
  std::optional<double> value_function(const Vector& x) const override {
    const Vector c = clamp(x);
    return quartic(x - c) + quartic(c - e());
  }
  std::optional<Vector> value_function_gradient(
      const Vector& x) const override {
    if (y_half_width_ && (x.array().abs() > *y_half_width_).any()) {
      return std::nullopt;
    }
    return quartic_grad(x - e());
  }
  std::optional<Vector> optimal_x() const override {
    if (y_half_width_ && *y_half_width_ < 1.0) return std::nullopt;
    return e();
  }
  std::optional<Vector> optimal_y() const override {
    if (y_half_width_ && *y_half_width_ < 1.0) return std::nullopt;
    return Vector::Ones(2 * dim_);
  }

 private:
  Vector y(const Vector& w) const { return w.head(dim_); }
  Vector z(const Vector& w) const { return w.tail(dim_); }
  Vector e() const { return Vector::Ones(dim_); }
  Vector clamp(const Vector& x) const {
    if (!y_half_width_) return x;
    return x.cwiseMax(-*y_half_width_).cwiseMin(*y_half_width_);
  }

  Eigen::Index dim_;
  double x_half_width_;
  std::optional<double> y_half_width_;
};

class Remark1 final : public BilevelProblem {
 public:
  explicit Remark1(double ridge)
      : BilevelProblem(BoxRegion::symmetric(1, 100.0), BoxRegion::whole(2)),
        ridge_(ridge) {}

  std::string name() const override { return "remark1"; }

  double F(const Vector& x, const Vector& y) const override {
    const double a = x[0] - y[1];
    const double b = y[0] - 1.0;
    return 0.5 * a * a + 0.5 * b * b;
  }
  double f(const Vector& x, const Vector& y) const override {
    return 0.5 * y[0] * y[0] - x[0] * y[0] + 0.5 * ridge_ * y[1] * y[1];
  }
  Vector grad_x_F(const Vector& x, const Vector& y) const override {
    return Vector::Constant(1, x[0] - y[1]);
  }
  Vector grad_y_F(const Vector& x, const Vector& y) const override {
    return Vector{{y[0] - 1.0, y[1] - x[0]}};
  }
  Vector grad_x_f(const Vector&, const Vector& y) const override {
    return Vector::Constant(1, -y[0]);
  }
  Vector grad_y_f(const Vector& x, const Vector& y) const override {
    return Vector{{y[0] - x[0], ridge_ * y[1]}};
  }

  bool has_hessians_F() const override { return true; }
  bool has_hessians_f() const override { return true; }
  Matrix hess_yy_F(const Vector&, const Vector&) const override {
    return Matrix::Identity(2, 2);
  }
  Matrix hess_yx_F(const Vector&, const Vector&) const override {
    return Matrix{{0.0}, {-1.0}};
  }
  Matrix hess_yy_f(const Vector&, const Vector&) const override {
    return Matrix{{1.0, 0.0}, {0.0, ridge_}};
  }
  Matrix hess_yx_f(const Vector&, const Vector&) const override {
    return Matrix{{-1.0}, {0.0}};
  }

  std::optional<double> lipschitz_F() const override { return 1.0; }
  std::optional<double> lipschitz_f() const override {
    return std::max(1.0, ridge_);
  }
  std::optional<double> strong_convexity_f() const override {
    if (ridge_ <= 0.0) return std::nullopt;
    return std::min(1.0, ridge_);
  }
  std::optional<double> lower_bound_F() const override { return 0.0; }

  std::optional<Vector> ll_solution(const Vector& x) const override {
    return Vector{{x[0], ridge_ > 0.0 ? 0.0 : x[0]}};
  }
  std::optional<double> ll_value(const Vector& x) const override {
    return -0.5 * x[0] * x[0];
  }
  std::optional<double> value_function(const Vector& x) const override {
    const double d = x[0] - 1.0;
    return ridge_ > 0.0 ? 0.5 * x[0] * x[0] + 0.5 * d * d : 0.5 * d * d;
  }
  std::optional<Vector> value_function_gradient(
      const Vector& x) const override {
    return Vector::Constant(1, ridge_ > 0.0 ? 2.0 * x[0] - 1.0 : x[0] - 1.0);
  }
  std::optional<Vector> optimal_x() const override {
    return Vector::Constant(1, ridge_ > 0.0 ? 0.5 : 1.0);
  }
  std::optional<Vector> optimal_y() const override {
    return ridge_ > 0.0 ? Vector{{0.5, 0.0}} : Vector{{1.0, 1.0}};
  }

 private:
  double ridge_;
};

class LlsQuadratic final : public BilevelProblem {
 public:
  explicit LlsQuadratic(const LlsQuadraticData& d)
      : BilevelProblem(BoxRegion::symmetric(d.B.cols(), d.x_half_width),
                       BoxRegion::whole(d.A.rows())),
        A_(d.A),
        B_(d.B),
        b_(d.b),
        rho_(d.rho) {
    if (A_.rows() != A_.cols() || B_.rows() != A_.rows() ||
        b_.size() != A_.rows() || B_.cols() < 1) {
      throw ContractViolation("make_lls_quadratic: inconsistent shapes");
    }
    require_finite(A_, "make_lls_quadratic A");
    require_finite(B_, "make_lls_quadratic B");
    require_finite(b_, "make_lls_quadratic b");
    if (!A_.isApprox(A_.transpose(), 1e-12)) {
      throw ContractViolation("make_lls_quadratic: A must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(A_);
    sigma_ = eig.eigenvalues().minCoeff();
    lmax_ = eig.eigenvalues().maxCoeff();
    if (!(sigma_ > 0.0)) {
      throw ContractViolation("make_lls_quadratic: A must be positive definite");
    }
    llt_.compute(A_);
    solution_map_ = llt_.solve(B_);
  }

  std::string name() const override { return "lls_quadratic"; }

  double F(const Vector& x, const Vector& y) const override {
    return 0.5 * (y - b_).squaredNorm() + 0.5 * rho_ * x.squaredNorm();
  }
  double f(const Vector& x, const Vector& y) const override {
    return 0.5 * y.dot(A_ * y) - (B_ * x).dot(y);
  }
  Vector grad_x_F(const Vector& x, const Vector&) const override {
    return rho_ * x;
  }
  Vector grad_y_F(const Vector&, const Vector& y) const override {
    return y - b_;
  }
  Vector grad_x_f(const Vector&, const Vector& y) const override {
    return -B_.transpose() * y;
  }
  Vector grad_y_f(const Vector& x, const Vector& y) const override {
    return A_ * y - B_ * x;
  }

  bool has_hessians_F() const override { return true; }
  bool has_hessians_f() const override { return true; }
  Matrix hess_yy_F(const Vector&, const Vector&) const override {
    return Matrix::Identity(m(), m());
  }
  Matrix hess_yx_F(const Vector&, const Vector&) const override {
    return Matrix::Zero(m(), n());
  }
  Matrix hess_yy_f(const Vector&, const Vector&) const override { return A_; }
  Matrix hess_yx_f(const Vector&, const Vector&) const override { return -B_; }

  std::optional<double> lipschitz_F() const override { return 1.0; }
  std::optional<double> lipschitz_f() const override { return lmax_; }
  std::optional<double> strong_convexity_f() const override { return sigma_; }
  std::optional<double> lower_bound_F() const override { return 0.0; }

  std::optional<Vector> ll_solution(const Vector& x) const override {
    return Vector(solution_map_ * x);
  }
  std::optional<double> ll_value(const Vector& x) const override {
    return f(x, solution_map_ * x);
  }
  std::optional<double> value_function(const Vector& x) const override {
    return F(x, solution_map_ * x);
  }
  std::optional<Vector> value_function_gradient(
      const Vector& x) const override {
    const Vector ystar = solution_map_ * x;
    return Vector(rho_ * x + solution_map_.transpose() * (ystar - b_));
  }
  std::optional<Vector> optimal_x() const override {
    Matrix normal = solution_map_.transpose() * solution_map_;
    normal.diagonal().array() += rho_;
    const Vector rhs = solution_map_.transpose() * b_;
    Vector x = normal.completeOrthogonalDecomposition().solve(rhs);
    if (!region_x().contains(x)) return std::nullopt;
    return x;
  }
  std::optional<Vector> optimal_y() const override {
    auto x = optimal_x();
    if (!x) return std::nullopt;
    return Vector(solution_map_ * *x);
  }

 private:
  Matrix A_;
  Matrix B_;
  Vector b_;
  double rho_;
  double sigma_ = 0.0;
  double lmax_ = 0.0;
  Eigen::LLT<Matrix> llt_;
  Matrix solution_map_;
};

}  // namespace

ProblemPtr make_counterexample(const CounterexampleOptions& options) {
  if (options.n <= 0) {
    throw ContractViolation("make_counterexample: n must be positive, got " +
                            std::to_string(options.n));
  }
  if (!(options.x_half_width > 0.0) ||
      (options.y_half_width && !(*options.y_half_width > 0.0))) {
    throw ContractViolation("make_counterexample: box widths must be positive");
  }
  return std::make_shared<Counterexample>(options);
}

ProblemPtr make_remark1(double ll_ridge) {
  if (!(ll_ridge >= 0.0) || !std::isfinite(ll_ridge)) {
    throw ContractViolation("make_remark1: ridge must be finite and >= 0");
  }
  return std::make_shared<Remark1>(ll_ridge);
}

double remark1_contraction(double step, int K) {
  return 1.0 - std::pow(1.0 - step, K);
}

double remark1_rhg_optimum(double step, int K) {
  const double a = remark1_contraction(step, K);
  return a / (1.0 + a * a);
}

ProblemPtr make_lls_quadratic(const LlsQuadraticData& data) {
  return std::make_shared<LlsQuadratic>(data);
}

ProblemPtr make_lls_quadratic(int n, int m, std::uint64_t seed) {
  if (n < 1 || m < 1) {
    throw ContractViolation("make_lls_quadratic: n and m must be >= 1");
  }
  RngStream rng(seed);
  const Matrix G = rng.normal_matrix(m, m);
  LlsQuadraticData d;
  d.A = G.transpose() * G / static_cast<double>(m);
  d.A.diagonal().array() += 1.0;
  d.A = 0.5 * (d.A + d.A.transpose());
  d.B = rng.normal_matrix(m, n);
  d.b = rng.normal_vector(m);
  d.rho = 0.1;
  return make_lls_quadratic(d);
}

}  // namespace bda
