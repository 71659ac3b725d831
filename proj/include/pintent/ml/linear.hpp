#pragma once

#include <cmath>
#include <numeric>

#include "pintent/ml/classifier.hpp"
#include "pintent/ml/scaler.hpp"

namespace pintent::ml {

namespace detail {

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Weighted mean logistic loss plus (l2/2)|beta|^2 for z = Z beta + b.
inline double logistic_objective(const Matrix& Z, const Vector& y, const Vector& w, double wsum,
                                 const Vector& beta, double b, double l2) {
  const Vector z = (Z * beta).array() + b;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) loss += w[i] * (softplus(z[i]) - y[i] * z[i]);
  return loss / wsum + 0.5 * l2 * beta.squaredNorm();
}

}  // namespace detail

/// L2-regularised logistic regression on standardised features, solved by
/// damped Newton iterations on the class-weighted mean loss. The intercept is
/// not penalised.
class LogisticRegression final : public Classifier {
 public:
  explicit LogisticRegression(TrainConfig cfg) : Classifier(std::move(cfg)) { cfg_.kind = ModelKind::LR; }

  StandardScaler scaler;
  Vector coef;
  double bias = 0.0;

  /// Zero coefficients over d standardised features.
  static LogisticRegression zero(std::size_t d, TrainConfig cfg = {}) {
    LogisticRegression m(std::move(cfg));
    m.scaler = {Vector::Zero(static_cast<Eigen::Index>(d)), Vector::Ones(static_cast<Eigen::Index>(d))};
    m.coef = Vector::Zero(static_cast<Eigen::Index>(d));
    m.set_dimension(d);
    return m;
  }

  std::vector<double> importance(const Matrix&, const Labels&) const override {
    std::vector<double> v(coef.data(), coef.data() + coef.size());
    for (double& x : v) x = std::abs(x);
    return normalized(std::move(v));
  }

  nlohmann::json params() const override {
    return {{"scaler", scaler.to_json()}, {"coef", vector_to_json(coef)}, {"bias", bias}};
  }

  void load_params(const nlohmann::json& j) override {
    scaler = StandardScaler::from_json(j.at("scaler"));
    coef = vector_from_json(j.at("coef"));
    bias = j.at("bias").get<double>();
    set_dimension(static_cast<std::size_t>(coef.size()));
  }

 protected:
  void do_fit(const Matrix& X, const Labels& labels) override {
    const Vector w = sample_weights(labels, cfg_.class_weighting);
    scaler = StandardScaler::fit(X, w);
    const Matrix Z = scaler.transform(X);
    Vector y(Z.rows());
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = labels[static_cast<std::size_t>(i)];
    const double wsum = w.sum();
    const Eigen::Index d = Z.cols();
    const double l2 = cfg_.l2;

    Vector theta = Vector::Zero(d + 1);  // coefficients, then intercept
    auto split = [&](const Vector& t) { return std::pair<Vector, double>(t.head(d), t[d]); };
    double obj = detail::logistic_objective(Z, y, w, wsum, theta.head(d), theta[d], l2);
    for (int iter = 0; iter < 200; ++iter) {
      const Vector z = (Z * theta.head(d)).array() + theta[d];
      Vector r(z.size()), h(z.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double p = sigmoid(z[i]);
        r[i] = w[i] * (p - y[i]) / wsum;
        h[i] = w[i] * p * (1 - p) / wsum;
      }
      Vector g(d + 1);
      g.head(d) = Z.transpose() * r + l2 * theta.head(d);
      g[d] = r.sum();
      Matrix H = Matrix::Zero(d + 1, d + 1);
      H.topLeftCorner(d, d) = Z.transpose() * h.asDiagonal() * Z;
      H.topLeftCorner(d, d).diagonal().array() += l2;
      const Vector zh = Z.transpose() * h;
      H.block(0, d, d, 1) = zh;
      H.block(d, 0, 1, d) = zh.transpose();
      H(d, d) = h.sum();
      H.diagonal().array() += 1e-12;
      const Vector step = H.ldlt().solve(g);
      double t = 1.0;
      Vector next = theta - step;
      double next_obj = detail::logistic_objective(Z, y, w, wsum, next.head(d), next[d], l2);
      while (next_obj > obj + 1e-15 && t > 1e-10) {
        t *= 0.5;
        next = theta - t * step;
        next_obj = detail::logistic_objective(Z, y, w, wsum, next.head(d), next[d], l2);
      }
      const double change = (next - theta).lpNorm<Eigen::Infinity>();
      if (next_obj > obj) break;
      theta = next;
      obj = next_obj;
      if (change < 1e-12 || g.lpNorm<Eigen::Infinity>() < 1e-14) break;
    }
    std::tie(coef, bias) = split(theta);
  }

  double row_proba(std::span<const double> x) const override {
    return sigmoid(scaler.transform_row(x).dot(coef) + bias);
  }
};

/// Linear SVM: hinge loss with L2 penalty, averaged SGD over seeded epoch
/// permutations, then a one-dimensional logistic calibration of the margin.
class LinearSvm final : public Classifier {
 public:
  explicit LinearSvm(TrainConfig cfg) : Classifier(std::move(cfg)) { cfg_.kind = ModelKind::SVM; }

  StandardScaler scaler;
  Vector coef;
  double bias = 0.0;
  double platt_a = 1.0;
  double platt_b = 0.0;

  double margin(std::span<const double> x) const { return scaler.transform_row(x).dot(coef) + bias; }

  std::vector<double> importance(const Matrix&, const Labels&) const override {
    std::vector<double> v(coef.data(), coef.data() + coef.size());
    for (double& x : v) x = std::abs(x);
    return normalized(std::move(v));
  }

  nlohmann::json params() const override {
    return {{"scaler", scaler.to_json()}, {"coef", vector_to_json(coef)}, {"bias", bias},
            {"platt_a", platt_a},         {"platt_b", platt_b}};
  }

  void load_params(const nlohmann::json& j) override {
    scaler = StandardScaler::from_json(j.at("scaler"));
    coef = vector_from_json(j.at("coef"));
    bias = j.at("bias").get<double>();
    platt_a = j.at("platt_a").get<double>();
    platt_b = j.at("platt_b").get<double>();
    set_dimension(static_cast<std::size_t>(coef.size()));
  }

 protected:
  void do_fit(const Matrix& X, const Labels& labels) override {
    const Vector w = sample_weights(labels, cfg_.class_weighting);
    scaler = StandardScaler::fit(X, w);
    const Matrix Z = scaler.transform(X);
    const Eigen::Index n = Z.rows(), d = Z.cols();
    const double wmean = w.mean();
    const double lambda = cfg_.l2;
    const double eta0 = cfg_.linear_rate;

    Vector beta = Vector::Zero(d), avg_beta = Vector::Zero(d);
    double b = 0.0, avg_b = 0.0;
    std::size_t averaged = 0;
    std::uint64_t t = 0;
    Rng rng(derive_seed(cfg_.seed, 0x5f3));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const Matrix Zt = Z.transpose();  // rows contiguous
    for (std::size_t epoch = 0; epoch < cfg_.linear_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (const auto i : order) {
        const double eta = eta0 / (1.0 + eta0 * lambda * static_cast<double>(t++));
        const double yi = labels[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
        const double m = yi * (Zt.col(i).dot(beta) + b);
        beta *= (1.0 - eta * lambda);
        if (m < 1.0) {
          const double s = eta * w[i] / wmean * yi;
          beta += s * Zt.col(i);
          b += s;
        }
        if (epoch > 0 || cfg_.linear_epochs == 1) {
          ++averaged;
          const double k = 1.0 / static_cast<double>(averaged);
          avg_beta += k * (beta - avg_beta);
          avg_b += k * (b - avg_b);
        }
      }
    }
    coef = avg_beta;
    bias = avg_b;
    calibrate(Z, labels, w);
  }

  double row_proba(std::span<const double> x) const override {
    return sigmoid(platt_a * margin(x) + platt_b);
  }

 private:
  /// Weighted logistic fit of p = sigmoid(a * margin + b) by Newton steps.
  void calibrate(const Matrix& Z, const Labels& labels, const Vector& w) {
    const Vector m = (Z * coef).array() + bias;
    double a = 1.0, c = 0.0;
    const double wsum = w.sum();
    auto objective = [&](double aa, double cc) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double z = aa * m[i] + cc;
        s += w[i] * (detail::softplus(z) - labels[static_cast<std::size_t>(i)] * z);
      }
      return s / wsum + 0.5e-6 * aa * aa;
    };
    double obj = objective(a, c);
    for (int iter = 0; iter < 100; ++iter) {
      double ga = 1e-6 * a, gc = 0, haa = 1e-6, hac = 0, hcc = 1e-12;
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double p = sigmoid(a * m[i] + c);
        const double r = w[i] * (p - labels[static_cast<std::size_t>(i)]) / wsum;
        const double h = w[i] * p * (1 - p) / wsum;
        ga += r * m[i];
        gc += r;
        haa += h * m[i] * m[i];
        hac += h * m[i];
        hcc += h;
      }
      const double det = haa * hcc - hac * hac;
      if (!(det > 0)) break;
      double da = (hcc * ga - hac * gc) / det;
      double dc = (haa * gc - hac * ga) / det;
      double t = 1.0;
      double next = objective(a - da, c - dc);
      while (next > obj && t > 1e-10) {
        t *= 0.5;
        next = objective(a - t * da, c - t * dc);
      }
      if (next > obj) break;
      a -= t * da;
      c -= t * dc;
      const bool done = std::abs(t * da) + std::abs(t * dc) < 1e-12;
      obj = next;
      if (done) break;
    }
    platt_a = a;
    platt_b = c;
  }
};

}  // namespace pintent::ml
