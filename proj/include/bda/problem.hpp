#pragma once

#include <optional>
#include <string>

#include "bda/numerics.hpp"

namespace bda {

// A bi-level program
//
//   min_{x in X} F(x, y)   s.t.   y in argmin_{y in Y} f(x, y)
//
// with UL variable x (dimension n) and LL variable y (dimension m).
//
// First derivatives are mandatory. Second derivatives are a capability:
// methods that differentiate through the inner dynamics check
// `has_hessians_F()` / `has_hessians_f()` first. Mixed blocks follow the
// convention hess_yx(x, y) = d/dx grad_y, an m-by-n matrix.
//
// Instances are immutable after construction and every member is pure, so a
// problem can be shared across threads.
class BilevelProblem {
 public:
  virtual ~BilevelProblem() = default;

  virtual std::string name() const = 0;

  Eigen::Index n() const { return region_x_.dim(); }
  Eigen::Index m() const { return region_y_.dim(); }
  const BoxRegion& region_x() const { return region_x_; }
  const BoxRegion& region_y() const { return region_y_; }

  virtual double F(const Vector& x, const Vector& y) const = 0;
  virtual double f(const Vector& x, const Vector& y) const = 0;
  virtual Vector grad_x_F(const Vector& x, const Vector& y) const = 0;
  virtual Vector grad_y_F(const Vector& x, const Vector& y) const = 0;
  virtual Vector grad_x_f(const Vector& x, const Vector& y) const = 0;
  virtual Vector grad_y_f(const Vector& x, const Vector& y) const = 0;

  virtual bool has_hessians_F() const { return false; }
  virtual bool has_hessians_f() const { return false; }

  // The defaults throw CapabilityError naming the missing field.
  virtual Matrix hess_yy_F(const Vector& x, const Vector& y) const;
  virtual Matrix hess_yx_F(const Vector& x, const Vector& y) const;
  virtual Matrix hess_yy_f(const Vector& x, const Vector& y) const;
  virtual Matrix hess_yx_f(const Vector& x, const Vector& y) const;

  // Products used by reverse-mode differentiation. Defaults go through the
  // dense matrices; large problems override them with matrix-free versions.
  virtual Vector hess_yy_F_times(const Vector& x, const Vector& y,
                                 const Vector& v) const;
  virtual Vector hess_yy_f_times(const Vector& x, const Vector& y,
                                 const Vector& v) const;
  // hess_yx^T v, an n-vector.
  virtual Vector hess_yx_F_transpose_times(const Vector& x, const Vector& y,
                                           const Vector& v) const;
  virtual Vector hess_yx_f_transpose_times(const Vector& x, const Vector& y,
                                           const Vector& v) const;

  // Smoothness of F(x, .) and f(x, .), strong convexity modulus of f(x, .),
  // and a lower bound M0 of F, when known.
  virtual std::optional<double> lipschitz_F() const { return std::nullopt; }
  virtual std::optional<double> lipschitz_f() const { return std::nullopt; }
  virtual std::optional<double> strong_convexity_f() const {
    return std::nullopt;
  }
  virtual std::optional<double> lower_bound_F() const { return std::nullopt; }

  // Analytic references. `ll_solution` returns the optimistic LL solution: a
  // point of S(x) minimizing F over S(x) (the set S-hat(x)).
  virtual std::optional<Vector> ll_solution(const Vector& x) const {
    (void)x;
    return std::nullopt;
  }
  // min_{y in Y} f(x, y)
  virtual std::optional<double> ll_value(const Vector& x) const {
    (void)x;
    return std::nullopt;
  }
  // phi(x) = inf over y in S(x) of F(x, y)
  virtual std::optional<double> value_function(const Vector& x) const {
    (void)x;
    return std::nullopt;
  }
  virtual std::optional<Vector> value_function_gradient(const Vector& x) const {
    (void)x;
    return std::nullopt;
  }
  virtual std::optional<Vector> optimal_x() const { return std::nullopt; }
  virtual std::optional<Vector> optimal_y() const { return std::nullopt; }

 protected:
  BilevelProblem(BoxRegion region_x, BoxRegion region_y)
      : region_x_(std::move(region_x)), region_y_(std::move(region_y)) {}

 private:
  BoxRegion region_x_;
  BoxRegion region_y_;
};

}  // namespace bda
