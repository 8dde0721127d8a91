#pragma once

#include <functional>

#include "bda/numerics.hpp"

namespace testing_support {

// Plain central differences kept separate from library code.
inline bda::Vector central_diff(const std::function<double(const bda::Vector&)>& fn,
                                const bda::Vector& x, double h) {
  bda::Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    bda::Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (fn(xp) - fn(xm)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const bda::Vector& a, const bda::Vector& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace testing_support
