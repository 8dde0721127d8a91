#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "bda/problem.hpp"

namespace bda {

struct HypercleanConfig {
  int num_classes = 3;
  int feature_dim = 5;
  int n_train = 200;
  int n_val = 100;
  int n_test = 200;
  double corruption_fraction = 0.5;
  // Distance scale between the class means.
  double class_separation = 3.0;
  // Optional ridge term 1/2 r ||y||^2 added to the UL objective.
  double ul_ridge = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LabeledSet {
  Matrix features;          // rows are samples
  std::vector<int> labels;  // observed labels (possibly corrupted)
  std::vector<int> true_labels;
  std::vector<bool> corrupted;

  int size() const { return static_cast<int>(labels.size()); }
};

struct HypercleanData {
  LabeledSet train;
  LabeledSet val;
  LabeledSet test;
  int num_classes = 0;
};

// Class-conditional Gaussian blobs (unit covariance) with means drawn from
// the seed; a fraction of training labels is moved to a uniformly chosen
// wrong class. Throws ContractViolation when a class ends up with no
// training samples.
HypercleanData make_hyperclean_data(const HypercleanConfig& config);

/// Data hyper-cleaning as a bi-level program.
///
/// x in R^{n_train} holds one logit per training sample, y the parameters of
/// a linear softmax classifier (row-major C x d weights followed by C biases):
///
///   f(x, y) = sum_train sigmoid(x_i) * CE(y; u_i, v_i)
///   F(x, y) = sum_val CE(y; u_i, v_i) + 1/2 ridge ||y||^2
///
/// X is the whole space and Y = [-100, 100]^m.
class HypercleanProblem final : public BilevelProblem {
 public:
  static constexpr double kWeightBox = 100.0;

  HypercleanProblem(HypercleanData data, double ul_ridge);

  std::string name() const override { return "hyperclean"; }

  const HypercleanData& data() const { return data_; }
  int num_classes() const { return data_.num_classes; }
  int feature_dim() const {
    return static_cast<int>(data_.train.features.cols());
  }

  double F(const Vector& x, const Vector& y) const override;
  double f(const Vector& x, const Vector& y) const override;
  Vector grad_x_F(const Vector& x, const Vector& y) const override;
  Vector grad_y_F(const Vector& x, const Vector& y) const override;
  Vector grad_x_f(const Vector& x, const Vector& y) const override;
  Vector grad_y_f(const Vector& x, const Vector& y) const override;

  bool has_hessians_F() const override { return true; }
  bool has_hessians_f() const override { return true; }
  Matrix hess_yy_F(const Vector& x, const Vector& y) const override;
  Matrix hess_yx_F(const Vector& x, const Vector& y) const override;
  Matrix hess_yy_f(const Vector& x, const Vector& y) const override;
  Matrix hess_yx_f(const Vector& x, const Vector& y) const override;
  Vector hess_yy_F_times(const Vector& x, const Vector& y,
                         const Vector& v) const override;
  Vector hess_yy_f_times(const Vector& x, const Vector& y,
                         const Vector& v) const override;
  Vector hess_yx_F_transpose_times(const Vector& x, const Vector& y,
                                   const Vector& v) const override;
  Vector hess_yx_f_transpose_times(const Vector& x, const Vector& y,
                                   const Vector& v) const override;

  std::optional<double> lipschitz_F() const override { return lipschitz_F_; }
  std::optional<double> lipschitz_f() const override { return lipschitz_f_; }
  std::optional<double> lower_bound_F() const override { return 0.0; }

  // Cross-entropy of one sample under classifier y.
  double sample_loss(const Vector& y, const Matrix& features, int row,
                     int label) const;
  // Sum of per-sample losses with the given weights (one per row).
  double weighted_loss(const Vector& y, const LabeledSet& set,
                       const Vector& weights) const;
  double accuracy(const Vector& y, const LabeledSet& set) const;

 private:
  Vector logits(const Vector& y, const Matrix& features, int row) const;
  // Gradient of the sample loss w.r.t. y, accumulated with a weight.
  void add_sample_grad(const Vector& y, const Matrix& features, int row,
                       int label, double weight, Vector& out) const;
  void add_sample_hvp(const Vector& y, const Matrix& features, int row,
                      double weight, const Vector& v, Vector& out) const;
  void add_sample_hess(const Vector& y, const Matrix& features, int row,
                       double weight, Matrix& out) const;

  HypercleanData data_;
  double ul_ridge_;
  double lipschitz_F_ = 0.0;
  double lipschitz_f_ = 0.0;
};

std::shared_ptr<const HypercleanProblem> make_hypercleaning(
    const HypercleanConfig& config);

double sigmoid(double t);

// Dataset dump: split,index,label,corrupted_flag,feature_0..feature_{d-1}.
void write_dataset_csv(const HypercleanData& data,
                       const std::filesystem::path& path);
HypercleanData read_dataset_csv(const std::filesystem::path& path,
                                int num_classes);

}  // namespace bda
