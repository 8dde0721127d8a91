#include "bda/problem.hpp"

#include "bda/errors.hpp"

namespace bda {

namespace {
[[noreturn]] void missing(const BilevelProblem& p, const char* field) {
  throw CapabilityError("problem '" + p.name() + "' does not provide " + field);
}
}  // namespace

Matrix BilevelProblem::hess_yy_F(const Vector&, const Vector&) const {
  missing(*this, "hess_yy_F");
}
Matrix BilevelProblem::hess_yx_F(const Vector&, const Vector&) const {
  missing(*this, "hess_yx_F");
}
Matrix BilevelProblem::hess_yy_f(const Vector&, const Vector&) const {
  missing(*this, "hess_yy_f");
}
Matrix BilevelProblem::hess_yx_f(const Vector&, const Vector&) const {
  missing(*this, "hess_yx_f");
}

Vector BilevelProblem::hess_yy_F_times(const Vector& x, const Vector& y,
                                       const Vector& v) const {
  return hess_yy_F(x, y) * v;
}
Vector BilevelProblem::hess_yy_f_times(const Vector& x, const Vector& y,
                                       const Vector& v) const {
  return hess_yy_f(x, y) * v;
}
Vector BilevelProblem::hess_yx_F_transpose_times(const Vector& x,
                                                 const Vector& y,
                                                 const Vector& v) const {
  return hess_yx_F(x, y).transpose() * v;
}
Vector BilevelProblem::hess_yx_f_transpose_times(const Vector& x,
                                                 const Vector& y,
                                                 const Vector& v) const {
  return hess_yx_f(x, y).transpose() * v;
}

}  // namespace bda
