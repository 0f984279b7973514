#include <doctest.h>

#include <algorithm>

#include "explia/rfe.hpp"
#include "support.hpp"

using namespace explia;
using namespace explia::rfe;

namespace {

Trainer gbt_trainer() {
  return [](const FeatureMatrix& x, const LabelVector& y) -> TrainedModel {
    return models::train_gbt(x, y, {.n_trees = 20, .max_depth = 3});
  };
}

// Column 0 decides the label; columns 1..9 are noise.
support::Planted one_feature(std::size_t n, std::uint64_t seed) { return support::planted(n, 1, 9, seed); }

void check_acceptance_rule(const RfeTrace& t) {
  double prev = t.iterations.front().score;
  for (std::size_t i = 1; i < t.iterations.size(); ++i) {
    const auto& it = t.iterations[i];
    CHECK(it.accepted == (it.score >= prev - t.tolerance));
    if (it.accepted) prev = it.score;
  }
}

}  // namespace

TEST_CASE("drop_zero_importance") {
  SUBCASE("22 of 40 used -> 18 dropped") {
    ImportanceVector imp;
    imp.scores.assign(40, 0.0);
    for (std::size_t j = 0; j < 40; j += 2) imp.scores[j] = 0.01;
    imp.scores[1] = imp.scores[3] = 0.2;
    CHECK(drop_zero_importance(imp).size() == 22);
  }
  SUBCASE("all used is identity, a stump keeps one") {
    ImportanceVector all{nullptr, {0.1, 0.2, 0.7}, models::ImportanceMethod::Gain, "gbt"};
    CHECK(drop_zero_importance(all) == std::vector<std::size_t>{0, 1, 2});
    CHECK(drop_zero_importance(models::importance_gain(support::stump_gbt(6, 4, 0.0, -1, 1))) ==
          std::vector<std::size_t>{4});
  }
}

TEST_CASE("xai_guided_seed is the union of top-m lists") {
  const auto schema = support::schema_of_width(40);
  SUBCASE("three identical top-20 lists") {
    std::vector<double> s(40);
    for (std::size_t j = 0; j < 40; ++j) s[j] = 40.0 - static_cast<double>(j);
    const consistency::RankingSource a{"a", schema, s};
    CHECK(xai_guided_seed({a, a, a}, 20).size() == 20);
  }
  SUBCASE("disjoint top-2 lists") {
    auto top = [&](std::size_t i, std::size_t j) {
      std::vector<double> s(40, 0.0);
      s[i] = 2.0;
      s[j] = 1.0;
      return consistency::RankingSource{"s", schema, s};
    };
    CHECK(xai_guided_seed({top(0, 1), top(10, 11), top(20, 21)}, 2) ==
          std::vector<std::size_t>{0, 1, 10, 11, 20, 21});
  }
}

TEST_CASE("rfe_run") {
  const auto d = one_feature(500, 17);
  SUBCASE("planted feature survives, final score within tolerance of baseline") {
    RfeConfig c;
    c.min_features = 1;
    c.tolerance = 0.01;
    const auto r = rfe_run(gbt_trainer(), d.x, d.y, 3, c);
    const auto& best = r.trace.best_features;
    CHECK(std::find(best.begin(), best.end(), 0) != best.end());
    CHECK(r.trace.best_score >= r.trace.baseline_score - c.tolerance);
    check_acceptance_rule(r.trace);
    CHECK(r.trace.iterations.front().kind == StepKind::Baseline);
    CHECK(r.trace.iterations.front().features.size() == 10);
    CHECK(models::schema_of(r.model)->width() == best.size());
  }
  SUBCASE("min_features = p keeps everything") {
    RfeConfig c;
    c.min_features = 10;
    const auto r = rfe_run(gbt_trainer(), d.x, d.y, 3, c);
    CHECK(r.trace.iterations.size() == 1);
    CHECK(r.trace.best_features.size() == 10);
  }
  SUBCASE("seed set restricts the batch step") {
    RfeConfig c;
    c.min_features = 2;
    c.tolerance = 1.0;
    c.batch_drop_zero = false;
    const auto r = rfe_run(gbt_trainer(), d.x, d.y, 3, c, std::vector<std::size_t>{0, 4, 7});
    REQUIRE(r.trace.iterations.size() >= 2);
    CHECK(r.trace.iterations[1].kind == StepKind::Batch);
    CHECK(r.trace.iterations[1].features == std::vector<std::size_t>{0, 4, 7});
    CHECK(r.trace.iterations.back().features.size() == 2);
  }
  SUBCASE("deterministic, with a readable trace") {
    RfeConfig c;
    c.min_features = 6;
    const auto a = rfe_run(gbt_trainer(), d.x, d.y, 3, c);
    const auto b = rfe_run(gbt_trainer(), d.x, d.y, 3, c);
    CHECK(trace_csv(a.trace) == trace_csv(b.trace));
    CHECK(trace_csv(a.trace).rfind("iteration,kind,n_features,removed,score,accepted\n", 0) == 0);
  }
  SUBCASE("parameter errors") {
    RfeConfig c;
    c.min_features = 11;
    CHECK_THROWS_AS(rfe_run(gbt_trainer(), d.x, d.y, 3, c), Error);
    c.min_features = 0;
    CHECK_THROWS_AS(rfe_run(gbt_trainer(), d.x, d.y, 3, c), Error);
  }
  SUBCASE("trainer failures name the iteration") {
    RfeConfig c;
    c.min_features = 9;
    int calls = 0;
    const Trainer flaky = [&](const FeatureMatrix& x, const LabelVector& y) -> TrainedModel {
      if (++calls > 1) throw Error(ErrorKind::DegenerateLabel, "boom");
      return models::train_gbt(x, y, {.n_trees = 3});
    };
    CHECK_THROWS_WITH_AS(rfe_run(flaky, d.x, d.y, 3, c), doctest::Contains("RFE iteration 1"), Error);
  }
}
