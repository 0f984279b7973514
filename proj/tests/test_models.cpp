#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "explia/models.hpp"
#include "support.hpp"

using namespace explia;
using namespace explia::models;

namespace {

// Off-grid so the root split has positive gain; on the exact unit square every
// first split gains nothing and greedy growth stops.
struct Xor {
  FeatureMatrix x = support::matrix({{0, 0}, {0.2, 1}, {1, 0.2}, {1.1, 1.1}});
  LabelVector y = support::binary({0, 1, 1, 0});
};

double train_accuracy(const TrainedModel& m, const FeatureMatrix& x, const LabelVector& y) {
  return evaluate(m, x, y).accuracy;
}

double log_loss(const GbtModel& m, const FeatureMatrix& x, const LabelVector& y) {
  double loss = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double p = std::clamp(m.predict_proba(x.row(r)), 1e-15, 1.0 - 1e-15);
    loss -= y.values[r] ? std::log(p) : std::log(1.0 - p);
  }
  return loss / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("gbt") {
  SUBCASE("xor at depth 2") {
    Xor d;
    GbtParams p;
    p.n_trees = 10;
    p.max_depth = 2;
    p.min_child_weight = 0.0;
    CHECK(train_accuracy(train_gbt(d.x, d.y, p), d.x, d.y) == 1.0);
  }
  SUBCASE("single class needs allow_constant") {
    const auto x = support::matrix({{0}, {1}, {2}});
    const auto y = support::binary({1, 1, 1});
    try {
      train_gbt(x, y);
      FAIL("expected degenerate-label error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateLabel);
    }
    GbtParams p;
    p.allow_constant = true;
    const auto m = train_gbt(x, y, p);
    const double p0 = m.predict_proba(x.row(0));
    CHECK(p0 > 0.5);
    for (std::size_t r = 1; r < 3; ++r) CHECK(m.predict_proba(x.row(r)) == p0);
  }
  SUBCASE("margin 0 -> probability 0.5") {
    CHECK(predict_proba(TrainedModel{support::constant_gbt(2, 0.0)}, std::vector<double>{1, 2}) == 0.5);
  }
  SUBCASE("decomposition, loss monotone, determinism") {
    const auto d = support::planted(300, 3, 3, 21);
    GbtParams p;
    p.n_trees = 15;
    p.max_depth = 3;
    const auto m = train_gbt(d.x, d.y, p);
    for (std::size_t r = 0; r < 50; ++r) {
      double margin = m.base_score;
      for (const auto& t : m.trees) margin += m.learning_rate * t.predict(d.x.row(r));
      CHECK(std::abs(predict_proba(TrainedModel{m}, d.x.row(r)) - logistic(margin)) < 1e-12);
    }
    GbtModel partial = m;
    partial.trees.clear();
    double prev = log_loss(partial, d.x, d.y);
    for (const auto& t : m.trees) {
      partial.trees.push_back(t);
      const double now = log_loss(partial, d.x, d.y);
      CHECK(now <= prev + 1e-12);
      prev = now;
    }
    CHECK(serialize(train_gbt(d.x, d.y, p)) == serialize(m));
  }
}

TEST_CASE("rf") {
  SUBCASE("xor") {
    Xor d;
    RfParams p;
    p.n_trees = 50;
    p.seed = 3;
    CHECK(train_accuracy(train_rf(d.x, d.y, p), d.x, d.y) == 1.0);
  }
  SUBCASE("one tree without bootstrap over all features does not depend on the seed") {
    const auto d = support::planted(120, 3, 2, 4);
    RfParams p;
    p.n_trees = 1;
    p.bootstrap = false;
    p.mtry = 5;
    p.seed = 1;
    const auto a = train_rf(d.x, d.y, p);
    p.seed = 99;
    const auto b = train_rf(d.x, d.y, p);
    CHECK(a.trees.front().nodes.size() == b.trees.front().nodes.size());
    for (std::size_t r = 0; r < d.x.rows(); ++r) CHECK(a.predict_proba(d.x.row(r)) == b.predict_proba(d.x.row(r)));
    CHECK(train_accuracy(a, d.x, d.y) == 1.0);
  }
  SUBCASE("tree order does not matter; all-ones votes give 1.0") {
    const auto d = support::planted(200, 3, 3, 5);
    RfParams p;
    p.n_trees = 20;
    auto m = train_rf(d.x, d.y, p);
    std::vector<double> before;
    for (std::size_t r = 0; r < d.x.rows(); ++r) before.push_back(m.predict_proba(d.x.row(r)));
    std::reverse(m.trees.begin(), m.trees.end());
    for (std::size_t r = 0; r < d.x.rows(); ++r) CHECK(m.predict_proba(d.x.row(r)) == doctest::Approx(before[r]).epsilon(1e-15));
    for (auto& t : m.trees)
      for (auto& n : t.nodes) n.value = 1.0;
    CHECK(m.predict_proba(d.x.row(0)) == 1.0);
  }
}

TEST_CASE("knn") {
  SUBCASE("k=1 on duplicate-free data is perfect on train") {
    const auto d = support::planted(100, 2, 2, 6);
    CHECK(train_accuracy(train_knn(d.x, d.y, 1), d.x, d.y) == 1.0);
  }
  SUBCASE("k=n predicts the majority everywhere") {
    const auto d = support::planted(31, 2, 2, 6);
    const auto counts = d.y.counts();
    const int majority = counts[1] > counts[0] ? 1 : 0;
    const auto m = train_knn(d.x, d.y, 31);
    for (double v : {-3.0, 0.0, 4.0}) CHECK(m.predict_class(std::vector<double>(4, v)) == majority);
  }
  SUBCASE("vote fraction") {
    const auto x = support::matrix({{0.0}, {1.0}, {2.0}, {3.0}, {4.0}, {50.0}});
    const auto m = train_knn(x, support::binary({1, 0, 1, 0, 1, 0}), 5);
    CHECK(m.predict_proba(std::vector<double>{2.0}) == doctest::Approx(0.6));
  }
  SUBCASE("k > n") {
    CHECK_THROWS_AS(train_knn(support::matrix({{0.0}}), support::binary({1}), 2), Error);
  }
  SUBCASE("matches an exhaustive scan") {
    const auto d = support::planted(400, 3, 3, 12);
    const auto m = train_knn(d.x, d.y, 5);
    const auto q = support::gaussian(300, 6, 13);
    for (std::size_t r = 0; r < q.rows(); ++r) {
      std::vector<std::pair<double, std::size_t>> all;
      for (std::size_t i = 0; i < d.x.rows(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < 6; ++c) s += std::pow(q(r, c) - d.x(i, c), 2);
        all.emplace_back(s, i);
      }
      std::sort(all.begin(), all.end());
      int ones = 0;
      double dist[2] = {0, 0};
      for (std::size_t j = 0; j < 5; ++j) {
        const int l = d.y.values[all[j].second];
        ones += l;
        dist[l] += std::sqrt(all[j].first);
      }
      const int expected = ones >= 3 ? 1 : 0;
      CHECK(m.predict_class(q.row(r)) == expected);
      CHECK(m.predict_proba(q.row(r)) == doctest::Approx(ones / 5.0));
    }
  }
  SUBCASE("scaling the raw features does not change predictions after standardization") {
    const auto d = support::planted(200, 3, 3, 14);
    auto scaled = d.x.values();
    for (std::size_t r = 0; r < scaled.rows(); ++r)
      for (std::size_t c = 0; c < scaled.cols(); ++c) scaled(r, c) *= 37.5;
    const FeatureMatrix xs(d.x.schema(), scaled);
    const auto za = dataset::standardize(d.x, dataset::fit_standardizer(d.x));
    const auto zb = dataset::standardize(xs, dataset::fit_standardizer(xs));
    const TrainedModel a = train_knn(za, d.y, 5);
    const TrainedModel b = train_knn(zb, d.y, 5);
    CHECK(predict_class(a, za) == predict_class(b, zb));
  }
}

TEST_CASE("metrics") {
  SUBCASE("perfect") {
    const std::vector<int> t{0, 1, 1, 0};
    const auto m = metrics_from(t, t);
    CHECK(m.accuracy == 1.0);
    CHECK(m.fp + m.fn == 0);
  }
  SUBCASE("two errors in ten") {
    const std::vector<int> truth{1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    const std::vector<int> pred{1, 1, 1, 1, 0, 0, 0, 0, 0, 1};
    const auto m = metrics_from(truth, pred);
    CHECK(m.accuracy == doctest::Approx(0.8));
    CHECK(m.tp == 4);
    CHECK(m.tn == 4);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.precision == doctest::Approx(0.8));
    CHECK(m.recall == doctest::Approx(0.8));
    CHECK(m.f1 == doctest::Approx(0.8));
  }
}

TEST_CASE("gain importance") {
  SUBCASE("stump puts everything on its feature") {
    const auto imp = importance_gain(support::stump_gbt(4, 2, 0.0, -1.0, 1.0));
    CHECK(imp.scores == std::vector<double>{0, 0, 1, 0});
  }
  SUBCASE("sums to 1, unused features exactly 0") {
    auto d = support::planted(300, 2, 3, 8);
    const auto m = train_gbt(d.x, d.y, {.n_trees = 5, .max_depth = 2});
    const auto imp = importance_gain(m);
    CHECK(std::accumulate(imp.scores.begin(), imp.scores.end(), 0.0) == doctest::Approx(1.0));
    std::vector<bool> used(5, false);
    for (const auto& t : m.trees)
      for (const auto& n : t.nodes)
        if (!n.is_leaf()) used[static_cast<std::size_t>(n.feature)] = true;
    for (std::size_t j = 0; j < 5; ++j) {
      if (!used[j]) CHECK(imp.scores[j] == 0.0);
      CHECK(imp.scores[j] >= 0.0);
    }
  }
  SUBCASE("knn is a method mismatch") {
    const auto d = support::planted(20, 1, 1, 1);
    try {
      importance_gain(train_knn(d.x, d.y, 3));
      FAIL("expected method mismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MethodMismatch);
    }
  }
}

TEST_CASE("permutation importance") {
  SUBCASE("planted feature wins, constant feature scores ~0") {
    auto m = support::gaussian(400, 4, 31);
    std::vector<int> y(400);
    for (std::size_t r = 0; r < 400; ++r) {
      y[r] = m(r, 1) > 0.0;
      m(r, 3) = 2.5;
    }
    const FeatureMatrix x(support::schema_of_width(4), m);
    const auto labels = support::binary(y);
    const auto model = train_gbt(x, labels, {.n_trees = 10, .max_depth = 2});
    const auto imp = importance_permutation(model, x, labels, 5, 1);
    CHECK(imp.scores[1] > 0.0);
    CHECK(std::max_element(imp.scores.begin(), imp.scores.end()) - imp.scores.begin() == 1);
    CHECK(std::abs(imp.scores[3]) <= 0.01);
  }
  SUBCASE("knn fast route equals refitting predictions on permuted copies") {
    const auto d = support::planted(150, 3, 3, 9);
    const auto knn = train_knn(d.x, d.y, 5);
    const std::uint64_t seed = 77;
    const std::size_t repeats = 3;
    const auto fast = importance_permutation(knn, d.x, d.y, repeats, seed);
    const double base = evaluate(knn, d.x, d.y).accuracy;
    for (std::size_t col = 0; col < d.x.cols(); ++col) {
      double sum = 0.0;
      for (std::size_t r = 0; r < repeats; ++r) {
        std::vector<std::size_t> perm(d.x.rows());
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(derive_seed(derive_seed(seed, col), r));
        std::shuffle(perm.begin(), perm.end(), rng);
        auto v = d.x.values();
        for (std::size_t i = 0; i < v.rows(); ++i) v(i, col) = d.x(perm[i], col);
        sum += evaluate(knn, FeatureMatrix(d.x.schema(), v), d.y).accuracy;
      }
      CHECK(fast.scores[col] == doctest::Approx(base - sum / repeats).epsilon(1e-12));
    }
    CHECK(importance_permutation(knn, d.x, d.y, repeats, seed, 3).scores == fast.scores);
  }
}

TEST_CASE("model documents") {
  const auto d = support::planted(200, 3, 2, 10);
  const auto q = support::gaussian(1000, 5, 11);
  SUBCASE("gbt round trip") {
    const TrainedModel m = train_gbt(d.x, d.y, {.n_trees = 8, .max_depth = 3});
    const auto back = deserialize(serialize(m));
    for (std::size_t r = 0; r < q.rows(); ++r) {
      CHECK(std::get<GbtModel>(back).margin(q.row(r)) == std::get<GbtModel>(m).margin(q.row(r)));
    }
    CHECK(serialize(back) == serialize(m));
  }
  SUBCASE("rf round trip, per-tree votes") {
    const TrainedModel m = train_rf(d.x, d.y, {.n_trees = 6});
    const auto& a = std::get<RfModel>(m);
    const auto doc = deserialize(serialize(m));
    const auto& b = std::get<RfModel>(doc);
    REQUIRE(a.trees.size() == b.trees.size());
    for (std::size_t t = 0; t < a.trees.size(); ++t)
      for (std::size_t r = 0; r < 200; ++r) CHECK(a.trees[t].predict(q.row(r)) == b.trees[t].predict(q.row(r)));
  }
  SUBCASE("knn round trip") {
    const TrainedModel m = train_knn(d.x, d.y, 5);
    CHECK(predict_class(deserialize(serialize(m)), d.x) == predict_class(m, d.x));
  }
  SUBCASE("truncated and wrong-version documents") {
    const auto doc = serialize(TrainedModel{train_gbt(d.x, d.y, {.n_trees = 3})});
    try {
      deserialize(doc.substr(0, doc.size() / 2));
      FAIL("expected corrupt document");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::CorruptDocument);
    }
    auto bumped = doc;
    bumped.replace(0, bumped.find('\n'), "explia-model 999");
    try {
      deserialize(bumped);
      FAIL("expected version mismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::VersionMismatch);
    }
  }
}
