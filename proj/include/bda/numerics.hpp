#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace bda {

// Dense carriers. Finiteness is not a type-level property in Eigen, so every
// public entry point that accepts or produces these calls `require_finite`.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

void require_finite(const Vector& v, std::string_view where);
void require_finite(const Matrix& m, std::string_view where);
void require_finite(double value, std::string_view where);

void require_same_dim(Eigen::Index a, Eigen::Index b, std::string_view where);

// Per-coordinate interval [lower_i, upper_i]. A missing bound (std::nullopt)
// means that side is unbounded; infinities never enter the arithmetic.
class BoxRegion {
 public:
  using Bound = std::optional<double>;

  BoxRegion() = default;
  BoxRegion(std::vector<Bound> lower, std::vector<Bound> upper);

  static BoxRegion whole(Eigen::Index dim);
  static BoxRegion uniform(Eigen::Index dim, double lower, double upper);
  static BoxRegion symmetric(Eigen::Index dim, double half_width) {
    return uniform(dim, -half_width, half_width);
  }

  Eigen::Index dim() const { return static_cast<Eigen::Index>(lower_.size()); }
  const std::vector<Bound>& lower() const { return lower_; }
  const std::vector<Bound>& upper() const { return upper_; }

  bool is_whole_space() const;
  bool is_compact() const;
  bool contains(const Vector& v) const;

  // Euclidean diameter; only meaningful for compact regions.
  double diameter() const;

 private:
  std::vector<Bound> lower_;
  std::vector<Bound> upper_;
};

// Euclidean projection onto the box: coordinate-wise clamp.
Vector project_box(const Vector& v, const BoxRegion& region);

// Coordinates that the projection moves (v strictly outside its interval).
// The generalized Jacobian of the projection used for differentiation is
// diag(1 - mask).
std::vector<bool> projection_active(const Vector& v, const BoxRegion& region);

// Deterministic stream of reals. mt19937_64 is fully specified by the
// standard; the conversions to uniform/normal are done here rather than with
// <random> distributions, whose algorithms are implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal by Box-Muller.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Vector uniform_vector(Eigen::Index dim, double lo, double hi);
  Vector normal_vector(Eigen::Index dim);
  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

// Draw uniformly from the region; unbounded sides are replaced by
// `fallback_half_width` around the origin.
Vector sample_in_region(RngStream& rng, const BoxRegion& region,
                        double fallback_half_width);

}  // namespace bda
