#pragma once

#include <algorithm>
#include <cmath>
#include <thread>

#include "pintent/ml/classifier.hpp"
#include "pintent/ml/tree.hpp"

namespace pintent::ml {

namespace detail {

inline nlohmann::json trees_to_json(const std::vector<Tree>& trees) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : trees) out.push_back(t.to_json());
  return out;
}

inline std::vector<Tree> trees_from_json(const nlohmann::json& j) {
  std::vector<Tree> out;
  for (const auto& t : j) out.push_back(Tree::from_json(t));
  return out;
}

}  // namespace detail

/// Bagged CART ensemble with weighted Gini splits on binned features and a
/// random feature subset per split. Probabilities average the trees' leaf
/// class shares.
class RandomForest final : public Classifier {
 public:
  explicit RandomForest(TrainConfig cfg) : Classifier(std::move(cfg)) { cfg_.kind = ModelKind::RF; }

  std::vector<Tree> trees;
  std::vector<double> feature_importance;

  std::vector<double> importance(const Matrix&, const Labels&) const override { return feature_importance; }

  nlohmann::json params() const override {
    return {{"trees", detail::trees_to_json(trees)}, {"importance", feature_importance}};
  }

  void load_params(const nlohmann::json& j) override {
    trees = detail::trees_from_json(j.at("trees"));
    feature_importance = j.at("importance").get<std::vector<double>>();
    set_dimension(feature_importance.size());
  }

 protected:
  void do_fit(const Matrix& X, const Labels& y) override {
    const BinnedMatrix bins = BinnedMatrix::build(X, cfg_.max_bins);
    const Vector w = sample_weights(y, cfg_.class_weighting);
    const std::size_t n = bins.rows, d = bins.cols;
    const std::size_t ntrees = std::max<std::size_t>(1, cfg_.rf_trees);
    TreeParams tp;
    tp.max_depth = cfg_.rf_max_depth;
    tp.min_leaf = std::max<std::size_t>(1, cfg_.rf_min_leaf);
    tp.max_features = cfg_.rf_max_features
                          ? cfg_.rf_max_features
                          : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
    trees.assign(ntrees, {});
    std::vector<std::vector<double>> per_tree(ntrees, std::vector<double>(d, 0.0));

    auto work = [&](std::size_t first, std::size_t stride) {
      GiniCriterion crit{w.data(), y.data()};
      TreeBuilder<GiniCriterion> builder(bins, crit, tp);
      std::vector<std::uint32_t> samples(n);
      for (std::size_t t = first; t < ntrees; t += stride) {
        Rng rng(derive_seed(cfg_.seed, 0x7f, t));
        std::uniform_int_distribution<std::uint32_t> draw(0, static_cast<std::uint32_t>(n - 1));
        for (auto& s : samples) s = draw(rng);
        std::sort(samples.begin(), samples.end());
        trees[t] = builder.build(samples, rng, per_tree[t]);
      }
    };
    const std::size_t threads = std::clamp<std::size_t>(cfg_.threads, 1, ntrees);
    if (threads == 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
      for (auto& th : pool) th.join();
    }

    feature_importance.assign(d, 0.0);
    for (const auto& imp : per_tree) {
      const auto norm = normalized(imp);
      for (std::size_t f = 0; f < d; ++f) feature_importance[f] += norm[f];
    }
    feature_importance = normalized(std::move(feature_importance));
  }

  double row_proba(std::span<const double> x) const override {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
  }
};

/// Gradient-boosted trees for log loss with second-order leaf values and L2
/// leaf regularisation. Importance is the total split gain per feature.
class GradientBoosting final : public Classifier {
 public:
  explicit GradientBoosting(TrainConfig cfg) : Classifier(std::move(cfg)) { cfg_.kind = ModelKind::GBDT; }

  double base = 0.0;
  double rate = 0.1;
  std::vector<Tree> trees;
  std::vector<double> feature_importance;

  std::vector<double> importance(const Matrix&, const Labels&) const override { return feature_importance; }

  double raw_score(std::span<const double> x) const {
    double f = base;
    for (const auto& t : trees) f += rate * t.predict(x);
    return f;
  }

  nlohmann::json params() const override {
    return {{"base", base}, {"rate", rate}, {"trees", detail::trees_to_json(trees)},
            {"importance", feature_importance}};
  }

  void load_params(const nlohmann::json& j) override {
    base = j.at("base").get<double>();
    rate = j.at("rate").get<double>();
    trees = detail::trees_from_json(j.at("trees"));
    feature_importance = j.at("importance").get<std::vector<double>>();
    set_dimension(feature_importance.size());
  }

 protected:
  void do_fit(const Matrix& X, const Labels& y) override {
    const BinnedMatrix bins = BinnedMatrix::build(X, cfg_.max_bins);
    const Vector w = sample_weights(y, cfg_.class_weighting);
    const std::size_t n = bins.rows, d = bins.cols;
    double wpos = 0.0, wneg = 0.0;
    for (std::size_t i = 0; i < n; ++i) (y[i] ? wpos : wneg) += w[static_cast<Eigen::Index>(i)];
    base = std::log(wpos / wneg);
    rate = cfg_.gbdt_rate;

    TreeParams tp;
    tp.max_depth = cfg_.gbdt_depth;
    tp.min_leaf = std::max<std::size_t>(1, cfg_.gbdt_min_leaf);
    tp.lambda = cfg_.gbdt_lambda;
    std::vector<double> F(n, base), g(n), h(n);
    std::vector<double> raw_importance(d, 0.0);
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    Rng rng(derive_seed(cfg_.seed, 0x6bd));
    const Matrix Xt = X.transpose();  // rows contiguous
    trees.clear();
    for (std::size_t round = 0; round < cfg_.gbdt_rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = sigmoid(F[i]);
        const double wi = w[static_cast<Eigen::Index>(i)];
        g[i] = wi * (p - y[i]);
        h[i] = wi * p * (1 - p);
      }
      TreeBuilder<NewtonCriterion> builder(bins, NewtonCriterion{g.data(), h.data()}, tp);
      Tree t = builder.build(all, rng, raw_importance);
      for (std::size_t i = 0; i < n; ++i) {
        F[i] += rate * t.predict({Xt.col(static_cast<Eigen::Index>(i)).data(), d});
      }
      trees.push_back(std::move(t));
    }
    feature_importance = normalized(std::move(raw_importance));
  }

  double row_proba(std::span<const double> x) const override { return sigmoid(raw_score(x)); }
};

}  // namespace pintent::ml
