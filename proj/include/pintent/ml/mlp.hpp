#pragma once

#include <cmath>
#include <numeric>

#include "pintent/ml/classifier.hpp"
#include "pintent/ml/linear.hpp"
#include "pintent/ml/scaler.hpp"

namespace pintent::ml {

/// One tanh hidden layer and a logistic output unit.
struct MlpParams {
  Matrix W1;  // hidden x d
  Vector b1;  // hidden
  Vector w2;  // hidden
  double b2 = 0.0;

  static MlpParams zeros(std::size_t d, std::size_t hidden) {
    const auto h = static_cast<Eigen::Index>(hidden);
    return {Matrix::Zero(h, static_cast<Eigen::Index>(d)), Vector::Zero(h), Vector::Zero(h), 0.0};
  }

  std::size_t size() const { return static_cast<std::size_t>(W1.size() + b1.size() + w2.size() + 1); }

  Vector flatten() const {
    Vector v(static_cast<Eigen::Index>(size()));
    Eigen::Index k = 0;
    for (Eigen::Index c = 0; c < W1.cols(); ++c)
      for (Eigen::Index r = 0; r < W1.rows(); ++r) v[k++] = W1(r, c);
    for (Eigen::Index i = 0; i < b1.size(); ++i) v[k++] = b1[i];
    for (Eigen::Index i = 0; i < w2.size(); ++i) v[k++] = w2[i];
    v[k] = b2;
    return v;
  }

  void unflatten(const Vector& v) {
    if (static_cast<std::size_t>(v.size()) != size()) throw Error(Errc::DimensionMismatch, "MLP parameter vector");
    Eigen::Index k = 0;
    for (Eigen::Index c = 0; c < W1.cols(); ++c)
      for (Eigen::Index r = 0; r < W1.rows(); ++r) W1(r, c) = v[k++];
    for (Eigen::Index i = 0; i < b1.size(); ++i) b1[i] = v[k++];
    for (Eigen::Index i = 0; i < w2.size(); ++i) w2[i] = v[k++];
    b2 = v[k];
  }

  /// Output logits for the rows of Z.
  Vector logits(const Matrix& Z) const {
    const Matrix A = ((Z * W1.transpose()).rowwise() + b1.transpose()).array().tanh();
    return (A * w2).array() + b2;
  }
};

/// Weighted mean log loss plus (l2/2)(|W1|^2 + |w2|^2); fills `grad` when given.
inline double mlp_loss(const MlpParams& p, const Matrix& Z, const Vector& y, const Vector& w,
                       double l2, MlpParams* grad) {
  const double wsum = w.sum();
  const Matrix A = ((Z * p.W1.transpose()).rowwise() + p.b1.transpose()).array().tanh();
  const Vector z = (A * p.w2).array() + p.b2;
  double loss = 0.0;
  Vector dz(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    loss += w[i] * (detail::softplus(z[i]) - y[i] * z[i]);
    dz[i] = w[i] * (sigmoid(z[i]) - y[i]) / wsum;
  }
  loss = loss / wsum + 0.5 * l2 * (p.W1.squaredNorm() + p.w2.squaredNorm());
  if (grad) {
    grad->w2 = A.transpose() * dz + l2 * p.w2;
    grad->b2 = dz.sum();
    // dL/d(pre-activation) = dz * w2 * (1 - a^2)
    const Matrix dpre = ((dz * p.w2.transpose()).array() * (1.0 - A.array().square())).matrix();
    grad->W1 = dpre.transpose() * Z + l2 * p.W1;
    grad->b1 = dpre.colwise().sum().transpose();
  }
  return loss;
}

/// Multilayer perceptron trained with Adam on seeded minibatches.
class Mlp final : public Classifier {
 public:
  explicit Mlp(TrainConfig cfg) : Classifier(std::move(cfg)) { cfg_.kind = ModelKind::MLP; }

  using Classifier::predict_proba;

  StandardScaler scaler;
  MlpParams net;

  bool permutation_importance() const override { return true; }

  std::vector<double> importance(const Matrix& X, const Labels& y) const override {
    return ml::permutation_importance(*this, X, y, cfg_.importance_shuffles, cfg_.importance_max_rows,
                                      cfg_.seed);
  }

  Vector predict_proba(const Matrix& X) const override {
    check_dimension(dim_, static_cast<std::size_t>(X.cols()));
    const Vector z = net.logits(scaler.transform(X));
    return z.unaryExpr([](double v) { return sigmoid(v); });
  }

  nlohmann::json params() const override {
    return {{"scaler", scaler.to_json()},
            {"W1", matrix_to_json(net.W1)},
            {"b1", vector_to_json(net.b1)},
            {"w2", vector_to_json(net.w2)},
            {"b2", net.b2}};
  }

  void load_params(const nlohmann::json& j) override {
    scaler = StandardScaler::from_json(j.at("scaler"));
    net.W1 = matrix_from_json(j.at("W1"));
    net.b1 = vector_from_json(j.at("b1"));
    net.w2 = vector_from_json(j.at("w2"));
    net.b2 = j.at("b2").get<double>();
    set_dimension(static_cast<std::size_t>(scaler.mean.size()));
  }

 protected:
  void do_fit(const Matrix& X, const Labels& labels) override {
    const Vector w = sample_weights(labels, cfg_.class_weighting);
    scaler = StandardScaler::fit(X, w);
    const Matrix Z = scaler.transform(X);
    const auto n = static_cast<std::size_t>(Z.rows());
    const std::size_t d = static_cast<std::size_t>(Z.cols());
    Vector y(Z.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = labels[static_cast<std::size_t>(i)];

    Rng rng(derive_seed(cfg_.seed, 0x31b));
    net = MlpParams::zeros(d, cfg_.mlp_hidden);
    const double limit = std::sqrt(6.0 / static_cast<double>(d + cfg_.mlp_hidden));
    std::uniform_real_distribution<double> init(-limit, limit);
    for (Eigen::Index i = 0; i < net.W1.size(); ++i) net.W1.data()[i] = init(rng);
    const double limit2 = std::sqrt(6.0 / static_cast<double>(cfg_.mlp_hidden + 1));
    std::uniform_real_distribution<double> init2(-limit2, limit2);
    for (Eigen::Index i = 0; i < net.w2.size(); ++i) net.w2[i] = init2(rng);

    Vector theta = net.flatten();
    Vector m = Vector::Zero(theta.size()), v = Vector::Zero(theta.size());
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t t = 0;
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::max<std::size_t>(1, cfg_.mlp_batch);
    MlpParams grad = MlpParams::zeros(d, cfg_.mlp_hidden);
    Matrix Zb;
    Vector yb, wb;
    for (std::size_t epoch = 0; epoch < cfg_.mlp_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t len = std::min(batch, n - start);
        Zb.resize(static_cast<Eigen::Index>(len), Z.cols());
        yb.resize(static_cast<Eigen::Index>(len));
        wb.resize(static_cast<Eigen::Index>(len));
        for (std::size_t k = 0; k < len; ++k) {
          const auto i = order[start + k];
          Zb.row(static_cast<Eigen::Index>(k)) = Z.row(i);
          yb[static_cast<Eigen::Index>(k)] = y[i];
          wb[static_cast<Eigen::Index>(k)] = w[i];
        }
        mlp_loss(net, Zb, yb, wb, cfg_.mlp_l2, &grad);
        const Vector g = grad.flatten();
        ++t;
        m = beta1 * m + (1 - beta1) * g;
        v = beta2 * v + (1 - beta2) * g.cwiseProduct(g);
        const double c1 = 1 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1 - std::pow(beta2, static_cast<double>(t));
        theta.array() -= cfg_.mlp_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        net.unflatten(theta);
      }
    }
  }

  double row_proba(std::span<const double> x) const override {
    const Vector z = scaler.transform_row(x);
    const Vector a = (net.W1 * z + net.b1).array().tanh();
    return sigmoid(a.dot(net.w2) + net.b2);
  }
};

}  // namespace pintent::ml
