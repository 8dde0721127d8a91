#include "bda/hyperclean.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "bda/errors.hpp"
#include "bda/io.hpp"

namespace bda {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void HypercleanConfig::validate() const {
  if (num_classes < 2) throw ContractViolation("hyperclean: num_classes < 2");
  if (feature_dim < 1) throw ContractViolation("hyperclean: feature_dim < 1");
  if (n_train <= 0 || n_val <= 0 || n_test < 0) {
    throw ContractViolation("hyperclean: n_train and n_val must be positive");
  }
  if (!(corruption_fraction >= 0.0 && corruption_fraction < 1.0)) {
    throw ContractViolation("hyperclean: corruption_fraction must be in [0,1)");
  }
  if (!(ul_ridge >= 0.0)) throw ContractViolation("hyperclean: ul_ridge < 0");
}

namespace {

LabeledSet draw_set(RngStream& rng, const Matrix& means, int count) {
  const int classes = static_cast<int>(means.rows());
  LabeledSet set;
  set.features.resize(count, means.cols());
  set.labels.resize(count);
  set.corrupted.assign(count, false);
  for (int i = 0; i < count; ++i) {
    const int c = static_cast<int>(rng.below(classes));
    set.labels[i] = c;
    for (Eigen::Index j = 0; j < means.cols(); ++j) {
      set.features(i, j) = means(c, j) + rng.normal();
    }
  }
  set.true_labels = set.labels;
  return set;
}

}  // namespace

HypercleanData make_hyperclean_data(const HypercleanConfig& config) {
  config.validate();
  RngStream rng(config.seed);
  const Matrix means =
      config.class_separation *
      rng.normal_matrix(config.num_classes, config.feature_dim);

  HypercleanData data;
  data.num_classes = config.num_classes;
  data.train = draw_set(rng, means, config.n_train);
  data.val = draw_set(rng, means, config.n_val);
  data.test = draw_set(rng, means, config.n_test);

  std::vector<int> counts(config.num_classes, 0);
  for (int label : data.train.labels) ++counts[label];
  for (int c = 0; c < config.num_classes; ++c) {
    if (counts[c] == 0) {
      throw ContractViolation("hyperclean: class " + std::to_string(c) +
                              " has no training samples");
    }
  }

  // Partial Fisher-Yates picks the corrupted indices.
  const int n_corrupt = static_cast<int>(
      std::lround(config.corruption_fraction * config.n_train));
  std::vector<int> order(config.n_train);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < n_corrupt; ++i) {
    const int j = i + static_cast<int>(rng.below(config.n_train - i));
    std::swap(order[i], order[j]);
    const int idx = order[i];
    const int shift = 1 + static_cast<int>(rng.below(config.num_classes - 1));
    data.train.labels[idx] =
        (data.train.true_labels[idx] + shift) % config.num_classes;
    data.train.corrupted[idx] = true;
  }
  return data;
}

HypercleanProblem::HypercleanProblem(HypercleanData data, double ul_ridge)
    : BilevelProblem(
          BoxRegion::whole(data.train.size()),
          BoxRegion::symmetric(
              data.num_classes * (data.train.features.cols() + 1), kWeightBox)),
      data_(std::move(data)),
      ul_ridge_(ul_ridge) {
  // Boehning: the softmax cross-entropy Hessian w.r.t. the logits is bounded
  // by I/2, so each sample contributes at most ||(u, 1)||^2 / 2.
  auto bound = [](const Matrix& feats) {
    return 0.5 * (feats.rowwise().squaredNorm().array() + 1.0).sum();
  };
  lipschitz_f_ = bound(data_.train.features);
  lipschitz_F_ = bound(data_.val.features) + ul_ridge_;
}

Vector HypercleanProblem::logits(const Vector& y, const Matrix& features,
                                 int row) const {
  const int C = num_classes();
  const int d = feature_dim();
  Vector z(C);
  for (int c = 0; c < C; ++c) {
    z[c] = y.segment(c * d, d).dot(features.row(row).transpose()) +
           y[C * d + c];
  }
  return z;
}

namespace {
Vector softmax(const Vector& z) {
  const double top = z.maxCoeff();
  Vector p = (z.array() - top).exp().matrix();
  return p / p.sum();
}
double log_sum_exp(const Vector& z) {
  const double top = z.maxCoeff();
  return top + std::log((z.array() - top).exp().sum());
}
}  // namespace

double HypercleanProblem::sample_loss(const Vector& y, const Matrix& features,
                                      int row, int label) const {
  const Vector z = logits(y, features, row);
  return log_sum_exp(z) - z[label];
}

void HypercleanProblem::add_sample_grad(const Vector& y, const Matrix& features,
                                        int row, int label, double weight,
                                        Vector& out) const {
  const int C = num_classes();
  const int d = feature_dim();
  Vector r = softmax(logits(y, features, row));
  r[label] -= 1.0;
  for (int c = 0; c < C; ++c) {
    out.segment(c * d, d) += weight * r[c] * features.row(row).transpose();
    out[C * d + c] += weight * r[c];
  }
}

void HypercleanProblem::add_sample_hvp(const Vector& y, const Matrix& features,
                                       int row, double weight, const Vector& v,
                                       Vector& out) const {
  const int C = num_classes();
  const int d = feature_dim();
  const Vector p = softmax(logits(y, features, row));
  // Direction in logit space, then (diag(p) - p p^T) applied to it.
  const Vector dz = logits(v, features, row);
  const Vector dp = (p.array() * dz.array()).matrix() - p * p.dot(dz);
  for (int c = 0; c < C; ++c) {
    out.segment(c * d, d) += weight * dp[c] * features.row(row).transpose();
    out[C * d + c] += weight * dp[c];
  }
}

void HypercleanProblem::add_sample_hess(const Vector& y, const Matrix& features,
                                        int row, double weight,
                                        Matrix& out) const {
  const int C = num_classes();
  const int d = feature_dim();
  const Vector p = softmax(logits(y, features, row));
  Vector u(d + 1);
  u << features.row(row).transpose(), 1.0;
  auto index = [&](int c, int j) { return j < d ? c * d + j : C * d + c; };
  for (int a = 0; a < C; ++a) {
    for (int b = 0; b < C; ++b) {
      const double s = weight * ((a == b ? p[a] : 0.0) - p[a] * p[b]);
      if (s == 0.0) continue;
      for (int i = 0; i <= d; ++i) {
        for (int j = 0; j <= d; ++j) {
          out(index(a, i), index(b, j)) += s * u[i] * u[j];
        }
      }
    }
  }
}

double HypercleanProblem::weighted_loss(const Vector& y, const LabeledSet& set,
                                        const Vector& weights) const {
  double total = 0.0;
  for (int i = 0; i < set.size(); ++i) {
    if (weights[i] == 0.0) continue;
    total += weights[i] * sample_loss(y, set.features, i, set.labels[i]);
  }
  return total;
}

double HypercleanProblem::accuracy(const Vector& y,
                                   const LabeledSet& set) const {
  if (set.size() == 0) return 0.0;
  int hits = 0;
  for (int i = 0; i < set.size(); ++i) {
    Eigen::Index best = 0;
    logits(y, set.features, i).maxCoeff(&best);
    // Scored against the observed labels; validation and test are clean.
    if (static_cast<int>(best) == set.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / set.size();
}

double HypercleanProblem::F(const Vector&, const Vector& y) const {
  return weighted_loss(y, data_.val, Vector::Ones(data_.val.size())) +
         0.5 * ul_ridge_ * y.squaredNorm();
}

double HypercleanProblem::f(const Vector& x, const Vector& y) const {
  const Vector w = x.unaryExpr([](double t) { return sigmoid(t); });
  return weighted_loss(y, data_.train, w);
}

Vector HypercleanProblem::grad_x_F(const Vector& x, const Vector&) const {
  return Vector::Zero(x.size());
}

Vector HypercleanProblem::grad_y_F(const Vector&, const Vector& y) const {
  Vector g = ul_ridge_ * y;
  for (int i = 0; i < data_.val.size(); ++i) {
    add_sample_grad(y, data_.val.features, i, data_.val.labels[i], 1.0, g);
  }
  return g;
}

Vector HypercleanProblem::grad_x_f(const Vector& x, const Vector& y) const {
  Vector g(x.size());
  for (int i = 0; i < data_.train.size(); ++i) {
    const double s = sigmoid(x[i]);
    g[i] = s * (1.0 - s) *
           sample_loss(y, data_.train.features, i, data_.train.labels[i]);
  }
  return g;
}

Vector HypercleanProblem::grad_y_f(const Vector& x, const Vector& y) const {
  Vector g = Vector::Zero(m());
  for (int i = 0; i < data_.train.size(); ++i) {
    add_sample_grad(y, data_.train.features, i, data_.train.labels[i],
                    sigmoid(x[i]), g);
  }
  return g;
}

Matrix HypercleanProblem::hess_yy_F(const Vector&, const Vector& y) const {
  Matrix h = ul_ridge_ * Matrix::Identity(m(), m());
  for (int i = 0; i < data_.val.size(); ++i) {
    add_sample_hess(y, data_.val.features, i, 1.0, h);
  }
  return h;
}

Matrix HypercleanProblem::hess_yx_F(const Vector&, const Vector&) const {
  return Matrix::Zero(m(), n());
}

Matrix HypercleanProblem::hess_yy_f(const Vector& x, const Vector& y) const {
  Matrix h = Matrix::Zero(m(), m());
  for (int i = 0; i < data_.train.size(); ++i) {
    add_sample_hess(y, data_.train.features, i, sigmoid(x[i]), h);
  }
  return h;
}

Matrix HypercleanProblem::hess_yx_f(const Vector& x, const Vector& y) const {
  Matrix h = Matrix::Zero(m(), n());
  for (int i = 0; i < data_.train.size(); ++i) {
    const double s = sigmoid(x[i]);
    Vector col = Vector::Zero(m());
    add_sample_grad(y, data_.train.features, i, data_.train.labels[i],
                    s * (1.0 - s), col);
    h.col(i) = col;
  }
  return h;
}

Vector HypercleanProblem::hess_yy_F_times(const Vector&, const Vector& y,
                                          const Vector& v) const {
  Vector out = ul_ridge_ * v;
  for (int i = 0; i < data_.val.size(); ++i) {
    add_sample_hvp(y, data_.val.features, i, 1.0, v, out);
  }
  return out;
}

Vector HypercleanProblem::hess_yy_f_times(const Vector& x, const Vector& y,
                                          const Vector& v) const {
  Vector out = Vector::Zero(m());
  for (int i = 0; i < data_.train.size(); ++i) {
    add_sample_hvp(y, data_.train.features, i, sigmoid(x[i]), v, out);
  }
  return out;
}

Vector HypercleanProblem::hess_yx_F_transpose_times(const Vector& x,
                                                    const Vector&,
                                                    const Vector&) const {
  return Vector::Zero(x.size());
}

Vector HypercleanProblem::hess_yx_f_transpose_times(const Vector& x,
                                                    const Vector& y,
                                                    const Vector& v) const {
  Vector out(x.size());
  for (int i = 0; i < data_.train.size(); ++i) {
    const double s = sigmoid(x[i]);
    Vector g = Vector::Zero(m());
    add_sample_grad(y, data_.train.features, i, data_.train.labels[i], 1.0, g);
    out[i] = s * (1.0 - s) * g.dot(v);
  }
  return out;
}

std::shared_ptr<const HypercleanProblem> make_hypercleaning(
    const HypercleanConfig& config) {
  return std::make_shared<HypercleanProblem>(make_hyperclean_data(config),
                                             config.ul_ridge);
}

void write_dataset_csv(const HypercleanData& data,
                       const std::filesystem::path& path) {
  const auto d = data.train.features.cols();
  std::ostringstream out;
  out << "split,index,label,corrupted_flag";
  for (Eigen::Index j = 0; j < d; ++j) out << ",feature_" << j;
  out << '\n';
  auto emit = [&](const char* split_name, const LabeledSet& set) {
    for (int i = 0; i < set.size(); ++i) {
      out << split_name << ',' << i << ',' << set.labels[i] << ','
          << (set.corrupted[i] ? 1 : 0);
      for (Eigen::Index j = 0; j < d; ++j) {
        out << ',' << format_real(set.features(i, j));
      }
      out << '\n';
    }
  };
  emit("train", data.train);
  emit("val", data.val);
  emit("test", data.test);
  write_file_atomic(path, out.str());
}

HypercleanData read_dataset_csv(const std::filesystem::path& path,
                                int num_classes) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset " + path.string());
  const auto header = split(line, ',');
  if (header.size() < 5 || header[0] != "split") {
    throw IoError("bad dataset header in " + path.string());
  }
  const auto d = static_cast<Eigen::Index>(header.size() - 4);

  struct Row {
    int label;
    bool corrupted;
    std::vector<double> feats;
  };
  std::vector<Row> rows[3];
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw IoError("ragged dataset row in " + path.string());
    }
    const int which = cells[0] == "train" ? 0 : cells[0] == "val" ? 1 : 2;
    Row r{std::stoi(cells[2]), cells[3] == "1", {}};
    for (std::size_t j = 4; j < cells.size(); ++j) {
      r.feats.push_back(std::stod(cells[j]));
    }
    rows[which].push_back(std::move(r));
  }
  auto build = [&](const std::vector<Row>& src) {
    LabeledSet set;
    set.features.resize(static_cast<Eigen::Index>(src.size()), d);
    for (std::size_t i = 0; i < src.size(); ++i) {
      set.labels.push_back(src[i].label);
      set.corrupted.push_back(src[i].corrupted);
      // The original label of a corrupted row is not part of the dump.
      set.true_labels.push_back(src[i].corrupted ? -1 : src[i].label);
      for (Eigen::Index j = 0; j < d; ++j) {
        set.features(static_cast<Eigen::Index>(i), j) = src[i].feats[j];
      }
    }
    return set;
  };
  HypercleanData data;
  data.num_classes = num_classes;
  data.train = build(rows[0]);
  data.val = build(rows[1]);
  data.test = build(rows[2]);
  return data;
}

}  // namespace bda
