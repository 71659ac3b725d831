#pragma once

#include <algorithm>
#include <utility>

#include "pintent/ml/classifier.hpp"
#include "pintent/ml/scaler.hpp"

namespace pintent::ml {

/// Brute-force k-nearest neighbours on standardised features. The
/// probability is the class-weighted share of positive neighbours; distance
/// ties resolve to the lower training index.
class Knn final : public Classifier {
 public:
  explicit Knn(TrainConfig cfg) : Classifier(std::move(cfg)) { cfg_.kind = ModelKind::KNN; }

  StandardScaler scaler;
  Matrix points;  // d x n, standardised training rows as columns
  Labels labels;
  std::array<double, 2> weights{1.0, 1.0};

  using Classifier::predict_proba;

  bool permutation_importance() const override { return true; }

  std::vector<double> importance(const Matrix& X, const Labels& y) const override {
    return ml::permutation_importance(*this, X, y, cfg_.importance_shuffles, cfg_.importance_max_rows,
                                      cfg_.seed);
  }

  Vector predict_proba(const Matrix& X) const override {
    check_dimension(dim_, static_cast<std::size_t>(X.cols()));
    const Matrix Q = scaler.transform(X);
    const Vector train_sq = points.colwise().squaredNorm().transpose();
    Vector out(Q.rows());
    constexpr Eigen::Index kChunk = 256;
    std::vector<std::pair<double, std::uint32_t>> dist(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index start = 0; start < Q.rows(); start += kChunk) {
      const Eigen::Index len = std::min(kChunk, Q.rows() - start);
      const Matrix block = Q.middleRows(start, len);
      // |q - p|^2 = |q|^2 + |p|^2 - 2 q.p; |q|^2 is constant per query.
      const Matrix cross = block * points;
      for (Eigen::Index r = 0; r < len; ++r) {
        for (Eigen::Index j = 0; j < points.cols(); ++j) {
          dist[static_cast<std::size_t>(j)] = {train_sq[j] - 2.0 * cross(r, j), static_cast<std::uint32_t>(j)};
        }
        out[start + r] = vote(dist);
      }
    }
    return out;
  }

  nlohmann::json params() const override {
    return {{"scaler", scaler.to_json()},
            {"points", matrix_to_json(points.transpose())},
            {"labels", labels},
            {"weights", weights}};
  }

  void load_params(const nlohmann::json& j) override {
    scaler = StandardScaler::from_json(j.at("scaler"));
    points = matrix_from_json(j.at("points")).transpose();
    labels = j.at("labels").get<Labels>();
    weights = j.at("weights").get<std::array<double, 2>>();
    set_dimension(static_cast<std::size_t>(scaler.mean.size()));
  }

 protected:
  void do_fit(const Matrix& X, const Labels& y) override {
    weights = class_weights(y, cfg_.class_weighting);
    scaler = StandardScaler::fit(X, sample_weights(y, cfg_.class_weighting));
    points = scaler.transform(X).transpose();
    labels = y;
  }

  double row_proba(std::span<const double> x) const override {
    const Vector q = scaler.transform_row(x);
    std::vector<std::pair<double, std::uint32_t>> dist(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      dist[static_cast<std::size_t>(j)] = {(points.col(j) - q).squaredNorm(), static_cast<std::uint32_t>(j)};
    }
    return vote(dist);
  }

 private:
  double vote(std::vector<std::pair<double, std::uint32_t>>& dist) const {
    const std::size_t k = std::min(cfg_.knn_k, dist.size());
    if (k == 0) return 0.5;
    std::nth_element(dist.begin(), dist.begin() + static_cast<long>(k - 1), dist.end());
    double pos = 0.0, total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const int label = labels[dist[i].second];
      const double w = weights[label ? 1 : 0];
      total += w;
      if (label) pos += w;
    }
    return total > 0 ? pos / total : 0.5;
  }
};

}  // namespace pintent::ml
