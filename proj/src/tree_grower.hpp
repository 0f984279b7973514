#pragma once

// Exact greedy tree growth shared by the boosted and bagged ensembles.
//
// Every feature keeps its node's samples in ascending value order, so a split
// search is one linear scan per feature and a split is a stable partition of
// each feature's range. Candidate thresholds are midpoints between distinct
// consecutive values. Ties in gain go to the lower feature index, then the
// lower threshold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "explia/models.hpp"

namespace explia::models::detail {

using Order = std::vector<std::vector<std::uint32_t>>;

// Row indices sorted by each feature's value (ties by row index).
inline Order presort(const Matrix& x) {
  Order order(x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    auto& o = order[f];
    o.resize(x.rows());
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
  return order;
}

inline double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid >= hi ? lo : mid;
}

struct GrowOptions {
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t mtry = 0;       // 0 = every feature, ascending
  std::mt19937_64* rng = nullptr;
};

template <class Criterion>
class TreeGrower {
 public:
  using Stats = typename Criterion::Stats;

  TreeGrower(const Matrix& x, const Order& row_order, std::span<const std::uint32_t> sample_rows,
             const Criterion& crit, GrowOptions options)
      : x_(x), rows_(sample_rows), crit_(crit), opt_(options) {
    const std::size_t m = rows_.size();
    // Samples grouped by row so bootstrap duplicates stay adjacent in order.
    std::vector<std::uint32_t> first(x.rows() + 1, 0);
    for (auto r : rows_) ++first[r + 1];
    for (std::size_t r = 0; r < x.rows(); ++r) first[r + 1] += first[r];
    std::vector<std::uint32_t> by_row(m);
    {
      auto cursor = first;
      for (std::uint32_t s = 0; s < m; ++s) by_row[cursor[rows_[s]]++] = s;
    }
    order_.assign(x.cols(), {});
    for (std::size_t f = 0; f < x.cols(); ++f) {
      auto& o = order_[f];
      o.reserve(m);
      for (auto r : row_order[f]) {
        for (auto i = first[r]; i < first[r + 1]; ++i) o.push_back(by_row[i]);
      }
    }
    goes_left_.assign(m, 0);
    buffer_.resize(m);
    features_.resize(x.cols());
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  DecisionTree grow() {
    Stats root{};
    for (std::uint32_t s = 0; s < rows_.size(); ++s) root += crit_.sample(s);
    if (!rows_.empty()) build(0, rows_.size(), 0, root);
    DecisionTree tree;
    tree.nodes = std::move(nodes_);
    return tree;
  }

 private:
  struct Best {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
    Stats left{};
  };

  double value(std::uint32_t sample, std::size_t f) const { return x_(rows_[sample], f); }

  int build(std::size_t begin, std::size_t end, std::size_t depth, const Stats& stats) {
    const int id = static_cast<int>(nodes_.size());
    TreeNode leaf;
    leaf.value = crit_.leaf_value(stats);
    leaf.cover = crit_.cover(stats);
    nodes_.push_back(leaf);
    if ((opt_.max_depth != 0 && depth >= opt_.max_depth) || !crit_.may_split(stats)) return id;

    const Best best = search(begin, end, stats);
    if (!best.found) return id;

    const auto& o = order_[best.feature];
    std::size_t n_left = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const bool left = value(o[i], best.feature) <= best.threshold;
      goes_left_[o[i]] = left;
      n_left += left;
    }
    for (auto& ord : order_) {
      std::size_t l = begin;
      std::size_t r = 0;
      for (std::size_t i = begin; i < end; ++i) {
        if (goes_left_[ord[i]]) ord[l++] = ord[i];
        else buffer_[r++] = ord[i];
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(r),
                ord.begin() + static_cast<std::ptrdiff_t>(l));
    }

    Stats right = stats;
    right -= best.left;
    const int left_id = build(begin, begin + n_left, depth + 1, best.left);
    const int right_id = build(begin + n_left, end, depth + 1, right);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(best.feature);
    node.threshold = best.threshold;
    node.left = left_id;
    node.right = right_id;
    node.gain = best.gain;
    return id;
  }

  Best search(std::size_t begin, std::size_t end, const Stats& stats) {
    Best best;
    if (opt_.mtry == 0 || opt_.mtry >= features_.size() || opt_.rng == nullptr) {
      for (std::size_t f = 0; f < features_.size(); ++f) scan(f, begin, end, stats, best);
      return best;
    }
    // Draw features without replacement until mtry non-constant ones were tried.
    std::size_t tried = 0;
    for (std::size_t i = 0; i < features_.size() && tried < opt_.mtry; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, features_.size() - 1);
      std::swap(features_[i], features_[pick(*opt_.rng)]);
      tried += scan(features_[i], begin, end, stats, best);
    }
    return best;
  }

  // Returns false when the feature is constant within the node.
  bool scan(std::size_t f, std::size_t begin, std::size_t end, const Stats& stats, Best& best) const {
    const auto& o = order_[f];
    if (value(o[begin], f) == value(o[end - 1], f)) return false;
    Stats left{};
    for (std::size_t i = begin; i + 1 < end; ++i) {
      left += crit_.sample(o[i]);
      const double v = value(o[i], f);
      const double next = value(o[i + 1], f);
      if (v == next) continue;
      Stats right = stats;
      right -= left;
      const double gain = crit_.gain(left, right, stats);
      if (!crit_.worth_splitting(gain)) continue;
      if (gain > best.gain || (gain == best.gain && f < best.feature)) {
        best.found = true;
        best.feature = f;
        best.threshold = midpoint(v, next);
        best.gain = gain;
        best.left = left;
      }
    }
    return true;
  }

  const Matrix& x_;
  std::span<const std::uint32_t> rows_;
  const Criterion& crit_;
  GrowOptions opt_;
  Order order_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> buffer_;
  std::vector<std::size_t> features_;
  std::vector<TreeNode> nodes_;
};

// Second-order logistic boosting: Newton leaf values with L2 penalty.
struct NewtonCriterion {
  struct Stats {
    double g = 0.0;
    double h = 0.0;
    Stats& operator+=(const Stats& o) { g += o.g; h += o.h; return *this; }
    Stats& operator-=(const Stats& o) { g -= o.g; h -= o.h; return *this; }
  };

  std::span<const double> grad;
  std::span<const double> hess;
  double lambda = 1.0;
  double min_child_weight = 1.0;

  Stats sample(std::uint32_t s) const { return {grad[s], hess[s]}; }
  double score(const Stats& s) const { return s.g * s.g / (s.h + lambda); }
  double gain(const Stats& l, const Stats& r, const Stats& parent) const {
    if (l.h < min_child_weight || r.h < min_child_weight) return -std::numeric_limits<double>::infinity();
    return 0.5 * (score(l) + score(r) - score(parent));
  }
  bool worth_splitting(double gain) const { return gain > 0.0; }
  bool may_split(const Stats& s) const { return s.h >= 2.0 * min_child_weight; }
  double leaf_value(const Stats& s) const { return -s.g / (s.h + lambda); }
  double cover(const Stats& s) const { return s.h; }
};

// Gini impurity decrease for binary labels; leaves hold the class-1 fraction.
struct GiniCriterion {
  struct Stats {
    double n0 = 0.0;
    double n1 = 0.0;
    Stats& operator+=(const Stats& o) { n0 += o.n0; n1 += o.n1; return *this; }
    Stats& operator-=(const Stats& o) { n0 -= o.n0; n1 -= o.n1; return *this; }
  };

  std::span<const int> labels;  // per sample
  double min_samples_leaf = 1.0;

  Stats sample(std::uint32_t s) const { return labels[s] == 1 ? Stats{0.0, 1.0} : Stats{1.0, 0.0}; }
  // n * gini(node)
  static double weighted_impurity(const Stats& s) {
    const double n = s.n0 + s.n1;
    return n > 0.0 ? n - (s.n0 * s.n0 + s.n1 * s.n1) / n : 0.0;
  }
  double gain(const Stats& l, const Stats& r, const Stats& parent) const {
    if (l.n0 + l.n1 < min_samples_leaf || r.n0 + r.n1 < min_samples_leaf) {
      return -std::numeric_limits<double>::infinity();
    }
    return weighted_impurity(parent) - weighted_impurity(l) - weighted_impurity(r);
  }
  bool worth_splitting(double gain) const { return gain > 1e-12; }
  bool may_split(const Stats& s) const {
    return s.n0 > 0.0 && s.n1 > 0.0 && s.n0 + s.n1 >= 2.0 * min_samples_leaf;
  }
  double leaf_value(const Stats& s) const { return s.n1 / (s.n0 + s.n1); }
  double cover(const Stats& s) const { return s.n0 + s.n1; }
};

}  // namespace explia::models::detail
