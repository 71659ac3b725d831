#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pintent/ml/common.hpp"
#include "pintent/ml/metrics.hpp"

namespace pintent::ml {

/// Binary probabilistic classifier. Fitted models are immutable.
class Classifier {
 public:
  explicit Classifier(TrainConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~Classifier() = default;

  ModelKind kind() const { return cfg_.kind; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t dimension() const { return dim_; }

  void fit(const Matrix& X, const Labels& y) {
    check_training_data(X, y);
    dim_ = static_cast<std::size_t>(X.cols());
    do_fit(X, y);
  }

  double predict_proba(std::span<const double> x) const {
    check_dimension(dim_, x.size());
    return std::clamp(row_proba(x), 0.0, 1.0);
  }

  virtual Vector predict_proba(const Matrix& X) const {
    check_dimension(dim_, static_cast<std::size_t>(X.cols()));
    Vector out(X.rows());
    std::vector<double> row(dim_);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      for (std::size_t c = 0; c < dim_; ++c) row[c] = X(r, static_cast<Eigen::Index>(c));
      out[r] = std::clamp(row_proba(row), 0.0, 1.0);
    }
    return out;
  }

  /// Decision at threshold 0.5.
  Labels predict(const Matrix& X) const {
    const Vector p = predict_proba(X);
    Labels out(static_cast<std::size_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = p[i] >= 0.5 ? 1 : 0;
    return out;
  }

  /// Whether importance() needs held-out data.
  virtual bool permutation_importance() const { return false; }

  /// Normalised importance per feature. Permutation-based models evaluate on
  /// (X, y); the others ignore the arguments.
  virtual std::vector<double> importance(const Matrix& X, const Labels& y) const = 0;

  virtual nlohmann::json params() const = 0;
  virtual void load_params(const nlohmann::json& j) = 0;

  void set_dimension(std::size_t d) { dim_ = d; }

 protected:
  virtual void do_fit(const Matrix& X, const Labels& y) = 0;
  virtual double row_proba(std::span<const double> x) const = 0;

  TrainConfig cfg_;
  std::size_t dim_ = 0;
};

/// Mean F1 drop when one column is shuffled, over `shuffles` seeded
/// permutations of at most `max_rows` evaluation rows. Negative drops count as
/// zero; the result is normalised.
inline std::vector<double> permutation_importance(const Classifier& model, const Matrix& X,
                                                  const Labels& y, std::size_t shuffles,
                                                  std::size_t max_rows, std::uint64_t seed) {
  const auto d = static_cast<std::size_t>(X.cols());
  std::vector<double> drops(d, 0.0);
  if (X.rows() == 0 || shuffles == 0) return drops;
  Rng rng(derive_seed(seed, 0x9e51));
  std::vector<std::size_t> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  if (rows.size() > max_rows) {
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(max_rows);
    std::sort(rows.begin(), rows.end());
  }
  Matrix S(static_cast<Eigen::Index>(rows.size()), X.cols());
  Labels ys(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    S.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
    ys[i] = y[rows[i]];
  }
  const double base = f1(ys, model.predict(S)).f1;
  std::vector<Eigen::Index> perm(rows.size());
  for (std::size_t c = 0; c < d; ++c) {
    const Vector original = S.col(static_cast<Eigen::Index>(c));
    double total = 0.0;
    for (std::size_t k = 0; k < shuffles; ++k) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < perm.size(); ++i) S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = original[perm[i]];
      total += base - f1(ys, model.predict(S)).f1;
    }
    S.col(static_cast<Eigen::Index>(c)) = original;
    drops[c] = std::max(0.0, total / static_cast<double>(shuffles));
  }
  return normalized(std::move(drops));
}

}  // namespace pintent::ml
