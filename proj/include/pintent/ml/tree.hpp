#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "pintent/ml/common.hpp"

namespace pintent::ml {

// ---------------------------------------------------------------------------
// Feature binning
// ---------------------------------------------------------------------------

/// Columns quantised to at most `max_bins` ordered bins. Columns with no more
/// distinct values than bins are binned exactly. Bin b holds values
/// <= upper[b]; a split after bin b uses threshold cut[b], the midpoint to the
/// next observed value.
struct BinnedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> codes;          // column-major
  std::vector<std::vector<double>> upper;   // per column, last bin open-ended
  std::vector<std::vector<double>> cut;

  std::size_t bins(std::size_t c) const { return upper[c].size() + 1; }
  const std::uint8_t* column(std::size_t c) const { return codes.data() + c * rows; }

  static BinnedMatrix build(const Matrix& X, std::size_t max_bins = 64) {
    max_bins = std::clamp<std::size_t>(max_bins, 2, 256);
    BinnedMatrix b;
    b.rows = static_cast<std::size_t>(X.rows());
    b.cols = static_cast<std::size_t>(X.cols());
    b.codes.resize(b.rows * b.cols);
    b.upper.resize(b.cols);
    b.cut.resize(b.cols);
    std::vector<double> sorted(b.rows);
    for (std::size_t c = 0; c < b.cols; ++c) {
      for (std::size_t r = 0; r < b.rows; ++r) sorted[r] = X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      std::sort(sorted.begin(), sorted.end());
      std::vector<double> distinct(sorted);
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      auto& up = b.upper[c];
      if (distinct.size() <= max_bins) {
        up.assign(distinct.begin(), distinct.empty() ? distinct.end() : distinct.end() - 1);
      } else {
        for (std::size_t q = 1; q < max_bins; ++q) {
          const double v = sorted[q * b.rows / max_bins];
          if (v < distinct.back() && (up.empty() || v > up.back())) up.push_back(v);
        }
      }
      auto& ct = b.cut[c];
      for (double u : up) {
        const double next = *std::upper_bound(distinct.begin(), distinct.end(), u);
        ct.push_back(u + (next - u) / 2.0);
      }
      auto* col = b.codes.data() + c * b.rows;
      for (std::size_t r = 0; r < b.rows; ++r) {
        const double x = X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        col[r] = static_cast<std::uint8_t>(std::lower_bound(up.begin(), up.end(), x) - up.begin());
      }
    }
    return b;
  }
};

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

struct TreeNode {
  std::int32_t feature = -1;  // -1: leaf
  double threshold = 0.0;     // go left when x <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].value;
  }

  nlohmann::json to_json() const {
    std::vector<std::int32_t> f, l, r;
    std::vector<double> t, v;
    for (const auto& n : nodes) {
      f.push_back(n.feature);
      t.push_back(n.threshold);
      l.push_back(n.left);
      r.push_back(n.right);
      v.push_back(n.value);
    }
    return {{"feature", f}, {"threshold", t}, {"left", l}, {"right", r}, {"value", v}};
  }

  static Tree from_json(const nlohmann::json& j) {
    const auto f = j.at("feature").get<std::vector<std::int32_t>>();
    const auto t = j.at("threshold").get<std::vector<double>>();
    const auto l = j.at("left").get<std::vector<std::int32_t>>();
    const auto r = j.at("right").get<std::vector<std::int32_t>>();
    const auto v = j.at("value").get<std::vector<double>>();
    if (t.size() != f.size() || l.size() != f.size() || r.size() != f.size() || v.size() != f.size()) {
      throw Error(Errc::DimensionMismatch, "tree arrays differ in length");
    }
    Tree tree;
    for (std::size_t i = 0; i < f.size(); ++i) tree.nodes.push_back({f[i], t[i], l[i], r[i], v[i]});
    return tree;
  }
};

/// Weighted Gini impurity. Stats: (weight, positive weight).
struct GiniCriterion {
  // Per-sample inputs.
  const double* weight;
  const int* label;

  void accumulate(double* s, std::size_t i) const {
    s[0] += weight[i];
    if (label[i]) s[1] += weight[i];
  }
  /// Weighted impurity w * gini.
  static double impurity(const double* s) {
    if (s[0] <= 0) return 0.0;
    return 2.0 * s[1] * (s[0] - s[1]) / s[0];
  }
  static double split_gain(const double* parent, const double* left, const double* right, double) {
    return impurity(parent) - impurity(left) - impurity(right);
  }
  static double leaf_value(const double* s, double) { return s[0] > 0 ? s[1] / s[0] : 0.0; }
  static bool pure(const double* s) { return s[1] <= 0.0 || s[1] >= s[0]; }
  static bool child_ok(const double*, double) { return true; }
};

/// Second-order boosting criterion. Stats: (gradient sum, hessian sum).
struct NewtonCriterion {
  const double* grad;
  const double* hess;

  void accumulate(double* s, std::size_t i) const {
    s[0] += grad[i];
    s[1] += hess[i];
  }
  static double score(const double* s, double lambda) { return s[0] * s[0] / (s[1] + lambda); }
  static double split_gain(const double* parent, const double* left, const double* right, double lambda) {
    return 0.5 * (score(left, lambda) + score(right, lambda) - score(parent, lambda));
  }
  static double leaf_value(const double* s, double lambda) { return -s[0] / (s[1] + lambda); }
  static bool pure(const double*) { return false; }
  static bool child_ok(const double* s, double) { return s[1] > 1e-12; }
};

struct TreeParams {
  std::size_t max_depth = 12;
  std::size_t min_leaf = 1;
  std::size_t max_features = 0;  // 0: all
  double lambda = 0.0;
  double min_gain = 1e-12;
};

/// Histogram-based greedy builder. Gains tie-break to the lowest feature,
/// then the lowest threshold. `importance` accumulates each split's gain.
template <class Criterion>
class TreeBuilder {
 public:
  TreeBuilder(const BinnedMatrix& bins, Criterion crit, TreeParams params)
      : bins_(bins), crit_(crit), p_(params) {}

  /// `samples` may repeat indices (bootstrap multiplicity).
  Tree build(std::vector<std::uint32_t> samples, Rng& rng, std::vector<double>& importance) {
    samples_ = std::move(samples);
    Tree tree;
    features_.resize(bins_.cols);
    std::iota(features_.begin(), features_.end(), 0);
    grow(tree, 0, samples_.size(), 0, rng, importance);
    return tree;
  }

 private:
  static constexpr std::size_t kStats = 3;  // criterion stats + sample count

  std::int32_t grow(Tree& tree, std::size_t begin, std::size_t end, std::size_t depth, Rng& rng,
                    std::vector<double>& importance) {
    double total[kStats] = {0, 0, 0};
    for (std::size_t k = begin; k < end; ++k) crit_.accumulate(total, samples_[k]);
    total[2] = static_cast<double>(end - begin);
    const auto id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back({-1, 0.0, -1, -1, Criterion::leaf_value(total, p_.lambda)});

    const std::size_t n = end - begin;
    if (depth >= p_.max_depth || n < 2 * p_.min_leaf || Criterion::pure(total)) return id;

    // Candidate features: a random subset in ascending order.
    std::size_t m = bins_.cols;
    if (p_.max_features && p_.max_features < m) {
      for (std::size_t i = 0; i < p_.max_features; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, bins_.cols - 1);
        std::swap(features_[i], features_[pick(rng)]);
      }
      m = p_.max_features;
      std::sort(features_.begin(), features_.begin() + static_cast<long>(m));
    }

    double best_gain = p_.min_gain;
    std::int64_t best_feature = -1;
    std::size_t best_bin = 0;
    for (std::size_t fi = 0; fi < m; ++fi) {
      const std::size_t f = features_[fi];
      const std::size_t nb = bins_.bins(f);
      if (nb < 2) continue;
      hist_.assign(nb * kStats, 0.0);
      const auto* col = bins_.column(f);
      for (std::size_t k = begin; k < end; ++k) {
        const auto i = samples_[k];
        double* h = &hist_[col[i] * kStats];
        crit_.accumulate(h, i);
        h[2] += 1.0;
      }
      double left[kStats] = {0, 0, 0};
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        for (std::size_t s = 0; s < kStats; ++s) left[s] += hist_[b * kStats + s];
        if (left[2] < static_cast<double>(p_.min_leaf)) continue;
        double right[kStats];
        for (std::size_t s = 0; s < kStats; ++s) right[s] = total[s] - left[s];
        if (right[2] < static_cast<double>(p_.min_leaf)) break;
        if (!Criterion::child_ok(left, p_.lambda) || !Criterion::child_ok(right, p_.lambda)) continue;
        const double gain = Criterion::split_gain(total, left, right, p_.lambda);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<std::int64_t>(f);
          best_bin = b;
        }
      }
    }
    if (best_feature < 0) return id;

    const auto f = static_cast<std::size_t>(best_feature);
    const auto* col = bins_.column(f);
    const auto mid = std::partition(samples_.begin() + static_cast<long>(begin),
                                    samples_.begin() + static_cast<long>(end),
                                    [&](std::uint32_t i) { return col[i] <= best_bin; }) -
                     samples_.begin();
    importance[f] += best_gain;
    const auto l = grow(tree, begin, static_cast<std::size_t>(mid), depth + 1, rng, importance);
    const auto r = grow(tree, static_cast<std::size_t>(mid), end, depth + 1, rng, importance);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<std::int32_t>(f);
    node.threshold = bins_.cut[f][best_bin];
    node.left = l;
    node.right = r;
    return id;
  }

  const BinnedMatrix& bins_;
  Criterion crit_;
  TreeParams p_;
  std::vector<std::uint32_t> samples_;
  std::vector<std::size_t> features_;
  std::vector<double> hist_;
};

}  // namespace pintent::ml
