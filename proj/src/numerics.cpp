#include "bda/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bda/errors.hpp"

namespace bda {

void require_finite(const Vector& v, std::string_view where) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericalError(std::string(where) + ": non-finite entry at index " +
                           std::to_string(i));
    }
  }
}

void require_finite(const Matrix& m, std::string_view where) {
  if (!m.allFinite()) {
    throw NumericalError(std::string(where) + ": non-finite matrix entry");
  }
}

void require_finite(double value, std::string_view where) {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string(where) + ": non-finite value");
  }
}

void require_same_dim(Eigen::Index a, Eigen::Index b, std::string_view where) {
  if (a != b) {
    throw ContractViolation(std::string(where) + ": dimension mismatch (" +
                            std::to_string(a) + " vs " + std::to_string(b) +
                            ")");
  }
}

BoxRegion::BoxRegion(std::vector<Bound> lower, std::vector<Bound> upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) {
    throw ContractViolation("BoxRegion: lower/upper length mismatch");
  }
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    if ((lower_[i] && !std::isfinite(*lower_[i])) ||
        (upper_[i] && !std::isfinite(*upper_[i]))) {
      throw ContractViolation("BoxRegion: bounds must be finite or absent");
    }
    if (lower_[i] && upper_[i] && *lower_[i] > *upper_[i]) {
      throw ContractViolation("BoxRegion: lower > upper at index " +
                              std::to_string(i));
    }
  }
}

BoxRegion BoxRegion::whole(Eigen::Index dim) {
  return {std::vector<Bound>(dim), std::vector<Bound>(dim)};
}

BoxRegion BoxRegion::uniform(Eigen::Index dim, double lower, double upper) {
  return {std::vector<Bound>(dim, lower), std::vector<Bound>(dim, upper)};
}

bool BoxRegion::is_whole_space() const {
  return std::none_of(lower_.begin(), lower_.end(),
                      [](const Bound& b) { return b.has_value(); }) &&
         std::none_of(upper_.begin(), upper_.end(),
                      [](const Bound& b) { return b.has_value(); });
}

bool BoxRegion::is_compact() const {
  return std::all_of(lower_.begin(), lower_.end(),
                     [](const Bound& b) { return b.has_value(); }) &&
         std::all_of(upper_.begin(), upper_.end(),
                     [](const Bound& b) { return b.has_value(); });
}

bool BoxRegion::contains(const Vector& v) const {
  require_same_dim(v.size(), dim(), "BoxRegion::contains");
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (lower_[i] && v[i] < *lower_[i]) return false;
    if (upper_[i] && v[i] > *upper_[i]) return false;
  }
  return true;
}

double BoxRegion::diameter() const {
  if (!is_compact()) {
    throw CapabilityError("BoxRegion::diameter: region is unbounded");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < lower_.size(); ++i) {
    const double w = *upper_[i] - *lower_[i];
    sq += w * w;
  }
  return std::sqrt(sq);
}

Vector project_box(const Vector& v, const BoxRegion& region) {
  require_same_dim(v.size(), region.dim(), "project_box");
  require_finite(v, "project_box");
  Vector out = v;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (region.lower()[i]) out[i] = std::max(out[i], *region.lower()[i]);
    if (region.upper()[i]) out[i] = std::min(out[i], *region.upper()[i]);
  }
  return out;
}

std::vector<bool> projection_active(const Vector& v, const BoxRegion& region) {
  require_same_dim(v.size(), region.dim(), "projection_active");
  std::vector<bool> mask(v.size(), false);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    mask[i] = (region.lower()[i] && v[i] < *region.lower()[i]) ||
              (region.upper()[i] && v[i] > *region.upper()[i]);
  }
  return mask;
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (spare_normal_) {
    const double z = *spare_normal_;
    spare_normal_.reset();
    return z;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw ContractViolation("RngStream::below: n must be positive");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = engine_.max() - engine_.max() % n;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return draw % n;
}

Vector RngStream::uniform_vector(Eigen::Index dim, double lo, double hi) {
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = uniform(lo, hi);
  return v;
}

Vector RngStream::normal_vector(Eigen::Index dim) {
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal();
  return v;
}

Matrix RngStream::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal();
  }
  return m;
}

Vector sample_in_region(RngStream& rng, const BoxRegion& region,
                        double fallback_half_width) {
  Vector v(region.dim());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double lo = region.lower()[i].value_or(-fallback_half_width);
    const double hi = region.upper()[i].value_or(fallback_half_width);
    v[i] = rng.uniform(lo, hi);
  }
  return v;
}

}  // namespace bda
