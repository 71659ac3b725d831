#pragma once

#include <cmath>

#include "pintent/ml/common.hpp"

namespace pintent::ml {

/// Per-column z-scoring with sample-weighted mean and standard deviation.
/// Constant columns keep a unit scale.
struct StandardScaler {
  Vector mean;
  Vector scale;

  static StandardScaler fit(const Matrix& X, const Vector& w) {
    StandardScaler s;
    const double total = w.sum();
    s.mean = (X.transpose() * w) / total;
    s.scale.resize(X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double var = ((X.col(c).array() - s.mean[c]).square() * w.array()).sum() / total;
      const double sd = std::sqrt(var);
      s.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  static StandardScaler fit(const Matrix& X) { return fit(X, Vector::Ones(X.rows())); }

  Matrix transform(const Matrix& X) const {
    check_dimension(static_cast<std::size_t>(mean.size()), static_cast<std::size_t>(X.cols()));
    return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  }

  Vector transform_row(std::span<const double> x) const {
    check_dimension(static_cast<std::size_t>(mean.size()), x.size());
    Vector out(mean.size());
    for (Eigen::Index c = 0; c < mean.size(); ++c) out[c] = (x[static_cast<std::size_t>(c)] - mean[c]) / scale[c];
    return out;
  }

  nlohmann::json to_json() const { return {{"mean", vector_to_json(mean)}, {"scale", vector_to_json(scale)}}; }

  static StandardScaler from_json(const nlohmann::json& j) {
    return {vector_from_json(j.at("mean")), vector_from_json(j.at("scale"))};
  }
};

}  // namespace pintent::ml
