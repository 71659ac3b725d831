#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pintent/common.hpp"

namespace pintent::ml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;
using Rng = std::mt19937_64;

enum class ModelKind : std::uint8_t { LR, KNN, SVM, RF, GBDT, MLP };

inline constexpr int kFormatVersion = 1;

}  // namespace pintent::ml

namespace pintent {
template <>
struct EnumTraits<ml::ModelKind> {
  static constexpr std::string_view kind = "model";
  static constexpr std::array<std::string_view, 6> names = {"LR", "KNN", "SVM", "RF", "GBDT", "MLP"};
};
}  // namespace pintent

namespace pintent::ml {

struct TrainConfig {
  ModelKind kind = ModelKind::RF;
  bool class_weighting = true;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // random forest
  std::size_t rf_trees = 200;
  std::size_t rf_max_depth = 12;
  std::size_t rf_min_leaf = 5;
  std::size_t rf_max_features = 0;  // 0: floor(sqrt(d)), at least 1
  std::size_t max_bins = 64;

  // gradient-boosted trees
  std::size_t gbdt_rounds = 200;
  std::size_t gbdt_depth = 3;
  double gbdt_rate = 0.1;
  double gbdt_lambda = 1.0;
  std::size_t gbdt_min_leaf = 1;

  // nearest neighbours
  std::size_t knn_k = 15;

  // linear models
  double linear_rate = 0.1;
  std::size_t linear_epochs = 100;
  double l2 = 1e-4;

  // multilayer perceptron
  std::size_t mlp_hidden = 32;
  std::size_t mlp_epochs = 50;
  std::size_t mlp_batch = 64;
  double mlp_rate = 0.01;
  double mlp_l2 = 1e-4;

  // permutation importance
  std::size_t importance_shuffles = 5;
  std::size_t importance_max_rows = 256;

  nlohmann::json hyperparameters() const {
    return {{"class_weighting", class_weighting},
            {"seed", seed},
            {"rf_trees", rf_trees},
            {"rf_max_depth", rf_max_depth},
            {"rf_min_leaf", rf_min_leaf},
            {"rf_max_features", rf_max_features},
            {"max_bins", max_bins},
            {"gbdt_rounds", gbdt_rounds},
            {"gbdt_depth", gbdt_depth},
            {"gbdt_rate", gbdt_rate},
            {"gbdt_lambda", gbdt_lambda},
            {"gbdt_min_leaf", gbdt_min_leaf},
            {"knn_k", knn_k},
            {"linear_rate", linear_rate},
            {"linear_epochs", linear_epochs},
            {"l2", l2},
            {"mlp_hidden", mlp_hidden},
            {"mlp_epochs", mlp_epochs},
            {"mlp_batch", mlp_batch},
            {"mlp_rate", mlp_rate},
            {"mlp_l2", mlp_l2},
            {"importance_shuffles", importance_shuffles},
            {"importance_max_rows", importance_max_rows}};
  }

  static TrainConfig from_hyperparameters(ModelKind kind, const nlohmann::json& j) {
    TrainConfig c;
    c.kind = kind;
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    get("class_weighting", c.class_weighting);
    get("seed", c.seed);
    get("rf_trees", c.rf_trees);
    get("rf_max_depth", c.rf_max_depth);
    get("rf_min_leaf", c.rf_min_leaf);
    get("rf_max_features", c.rf_max_features);
    get("max_bins", c.max_bins);
    get("gbdt_rounds", c.gbdt_rounds);
    get("gbdt_depth", c.gbdt_depth);
    get("gbdt_rate", c.gbdt_rate);
    get("gbdt_lambda", c.gbdt_lambda);
    get("gbdt_min_leaf", c.gbdt_min_leaf);
    get("knn_k", c.knn_k);
    get("linear_rate", c.linear_rate);
    get("linear_epochs", c.linear_epochs);
    get("l2", c.l2);
    get("mlp_hidden", c.mlp_hidden);
    get("mlp_epochs", c.mlp_epochs);
    get("mlp_batch", c.mlp_batch);
    get("mlp_rate", c.mlp_rate);
    get("mlp_l2", c.mlp_l2);
    get("importance_shuffles", c.importance_shuffles);
    get("importance_max_rows", c.importance_max_rows);
    return c;
  }
};

/// w_c = N / (2 * N_c); both 1 when weighting is off.
inline std::array<double, 2> class_weights(const Labels& y, bool on) {
  if (!on) return {1.0, 1.0};
  std::array<std::size_t, 2> n{};
  for (int v : y) ++n[v ? 1 : 0];
  const double total = static_cast<double>(y.size());
  std::array<double, 2> w{};
  for (std::size_t c = 0; c < 2; ++c) w[c] = n[c] ? total / (2.0 * static_cast<double>(n[c])) : 0.0;
  return w;
}

inline Vector sample_weights(const Labels& y, bool on) {
  const auto cw = class_weights(y, on);
  Vector w(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) w[static_cast<Eigen::Index>(i)] = cw[y[i] ? 1 : 0];
  return w;
}

/// Training preconditions shared by every model.
inline void check_training_data(const Matrix& X, const Labels& y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(X.rows()) + " rows vs " +
                                          std::to_string(y.size()) + " labels");
  }
  if (!X.allFinite()) throw Error(Errc::NonFiniteInput, "feature matrix contains NaN or infinity");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v != 0 && v != 1) throw Error(Errc::InvalidConfig, "labels must be 0 or 1");
    (v ? pos : neg) = true;
  }
  if (!pos || !neg) throw Error(Errc::SingleClassTraining, "training labels contain one class");
}

inline void check_dimension(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw Error(Errc::DimensionMismatch,
                "expected " + std::to_string(expected) + " features, got " + std::to_string(got));
  }
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Scale to sum 1; all zeros stay zeros.
inline std::vector<double> normalized(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  if (s > 0) {
    for (double& x : v) x /= s;
  }
  return v;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw Error(Errc::DimensionMismatch, "ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace pintent::ml
