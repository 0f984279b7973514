#include "explia/rfe.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "explia/balance.hpp"

namespace explia::rfe {

std::string_view to_string(ImportanceSource source) {
  switch (source) {
    case ImportanceSource::Gain: return "gain";
    case ImportanceSource::Permutation: return "permutation";
    case ImportanceSource::ShapGlobal: return "shap_global";
  }
  return "?";
}

ImportanceSource parse_importance_source(std::string_view text) {
  if (text == "gain") return ImportanceSource::Gain;
  if (text == "permutation") return ImportanceSource::Permutation;
  if (text == "shap_global") return ImportanceSource::ShapGlobal;
  throw Error(ErrorKind::Parameter, "unknown importance source '" + std::string(text) + "'");
}

std::string_view to_string(StepKind kind) {
  switch (kind) {
    case StepKind::Baseline: return "baseline";
    case StepKind::Batch: return "batch";
    case StepKind::Single: return "single";
  }
  return "?";
}

std::vector<std::size_t> drop_zero_importance(const ImportanceVector& importance) {
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < importance.scores.size(); ++j) {
    if (importance.scores[j] != 0.0) kept.push_back(j);
  }
  return kept;
}

std::vector<std::size_t> xai_guided_seed(const std::vector<consistency::RankingSource>& sources, std::size_t m) {
  if (sources.empty()) throw Error(ErrorKind::Parameter, "seed needs at least one source");
  const auto& first = sources.front();
  std::set<std::size_t> seed;
  for (const auto& s : sources) {
    if (s.scores.size() != first.scores.size() ||
        (s.schema && first.schema && !s.schema->same_names(*first.schema))) {
      throw Error(ErrorKind::Schema, "source '" + s.name + "' is on a different feature schema");
    }
    const auto ranking = consistency::rank_features(s.scores);
    for (std::size_t i = 0; i < std::min(m, ranking.size()); ++i) seed.insert(ranking[i]);
  }
  return {seed.begin(), seed.end()};
}

std::vector<std::size_t> xai_guided_seed(const explain::GlobalShapSummary& shap,
                                         const consistency::RankingSource& lime_aggregate,
                                         const ImportanceVector& gain, std::size_t m) {
  return xai_guided_seed({consistency::from_shap(shap), lime_aggregate, consistency::from_importance(gain)}, m);
}

ImportanceVector importance_for(const TrainedModel& model, const FeatureMatrix& x_train, const FeatureMatrix& score_x,
                                const LabelVector& score_y, const RfeConfig& config) {
  switch (config.importance_source) {
    case ImportanceSource::Gain:
      return models::importance_gain(model);
    case ImportanceSource::Permutation:
      return models::importance_permutation(model, score_x, score_y, config.permutation_repeats,
                                            derive_seed(config.seed, "permutation"), config.workers);
    case ImportanceSource::ShapGlobal: {
      const auto bg_rows = balance::undersample(x_train.rows(), std::min(config.shap_background, x_train.rows()),
                                                derive_seed(config.seed, "background"));
      const auto ev_rows = balance::undersample(score_x.rows(), std::min(config.shap_eval, score_x.rows()),
                                                derive_seed(config.seed, "eval"));
      auto shap_config = config.shap;
      shap_config.workers = config.workers;
      const auto summary = explain::shap_global(model, score_x.select_rows(ev_rows),
                                                x_train.select_rows(bg_rows), shap_config);
      return {summary.schema, summary.mean_abs, models::ImportanceMethod::ShapGlobal,
              std::string(models::to_string(models::kind_of(model)))};
    }
  }
  throw Error(ErrorKind::Parameter, "unknown importance source");
}

RfeResult rfe_run(const Trainer& train, const FeatureMatrix& x, const LabelVector& y, const FeatureMatrix& score_x,
                  const LabelVector& score_y, const RfeConfig& config,
                  const std::optional<std::vector<std::size_t>>& seed_set) {
  const std::size_t p = x.cols();
  if (config.min_features < 1) throw Error(ErrorKind::Parameter, "min_features must be at least 1");
  if (config.tolerance < 0.0) throw Error(ErrorKind::Parameter, "tolerance must be non-negative");
  if (p < config.min_features) {
    throw Error(ErrorKind::Parameter, "RFE needs at least min_features=" + std::to_string(config.min_features) +
                                          " columns, got " + std::to_string(p));
  }
  if (score_x.cols() != p) throw Error(ErrorKind::Schema, "scoring fold width differs from training data");

  struct Fit {
    TrainedModel model;
    double score = 0.0;
  };
  auto fit = [&](const std::vector<std::size_t>& cols, std::size_t iteration) {
    const auto xs = x.select_features(cols);
    const auto ss = score_x.select_features(cols);
    Fit f;
    try {
      f.model = train(xs, y);
    } catch (const Error& e) {
      throw Error(e.kind(), "RFE iteration " + std::to_string(iteration) + ": " + e.what());
    }
    f.score = models::evaluate(f.model, ss, score_y).accuracy;
    return f;
  };
  auto importance = [&](const Fit& f, const std::vector<std::size_t>& cols) {
    return importance_for(f.model, x.select_features(cols), score_x.select_features(cols), score_y, config);
  };

  RfeTrace trace;
  trace.schema = x.schema();
  trace.tolerance = config.tolerance;

  std::vector<std::size_t> current(p);
  std::iota(current.begin(), current.end(), std::size_t{0});
  Fit accepted = fit(current, 0);
  trace.iterations.push_back({StepKind::Baseline, current, {}, accepted.score, true});
  trace.baseline_score = accepted.score;
  TrainedModel best_model = accepted.model;
  trace.best_features = current;
  trace.best_score = accepted.score;

  auto record_best = [&](const Fit& f) {
    if (f.score >= trace.best_score) {
      trace.best_score = f.score;
      trace.best_features = current;
      best_model = f.model;
    }
  };

  auto imp = importance(accepted, current);

  std::vector<std::size_t> batch;
  for (std::size_t i = 0; i < current.size(); ++i) {
    const bool zero = config.batch_drop_zero && imp.scores[i] == 0.0;
    const bool outside_seed =
        seed_set && std::find(seed_set->begin(), seed_set->end(), current[i]) == seed_set->end();
    if (zero || outside_seed) batch.push_back(current[i]);
  }
  if (!batch.empty() && p - batch.size() >= config.min_features) {
    std::vector<std::size_t> next;
    std::set_difference(current.begin(), current.end(), batch.begin(), batch.end(), std::back_inserter(next));
    Fit f = fit(next, trace.iterations.size());
    const bool ok = f.score >= accepted.score - config.tolerance;
    trace.iterations.push_back({StepKind::Batch, next, batch, f.score, ok});
    if (ok) {
      current = std::move(next);
      accepted = std::move(f);
      record_best(accepted);
      imp = importance(accepted, current);
    }
  }

  while (current.size() > config.min_features) {
    std::size_t weakest = 0;
    for (std::size_t i = 1; i < current.size(); ++i) {
      if (imp.scores[i] < imp.scores[weakest]) weakest = i;
    }
    std::vector<std::size_t> next = current;
    const std::size_t removed = next[weakest];
    next.erase(next.begin() + static_cast<std::ptrdiff_t>(weakest));
    Fit f = fit(next, trace.iterations.size());
    const bool ok = f.score >= accepted.score - config.tolerance;
    trace.iterations.push_back({StepKind::Single, next, {removed}, f.score, ok});
    if (!ok) break;
    current = std::move(next);
    accepted = std::move(f);
    record_best(accepted);
    imp = importance(accepted, current);
  }

  return {std::move(trace), std::move(best_model)};
}

RfeResult rfe_run(const Trainer& train, const FeatureMatrix& x, const LabelVector& y, std::uint64_t split_seed,
                  const RfeConfig& config, const std::optional<std::vector<std::size_t>>& seed_set) {
  const auto fold = dataset::split(x, y, 1.0 - config.validation_fraction, split_seed, true);
  return rfe_run(train, fold.train_x, fold.train_y, fold.test_x, fold.test_y, config, seed_set);
}

namespace {

std::string names(const SchemaPtr& schema, const std::vector<std::size_t>& cols) {
  std::string out;
  for (auto c : cols) {
    if (!out.empty()) out += ';';
    out += schema ? schema->names.at(c) : std::to_string(c);
  }
  return out;
}

}  // namespace

std::string trace_csv(const RfeTrace& trace) {
  std::ostringstream os;
  os << "iteration,kind,n_features,removed,score,accepted\n";
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const auto& it = trace.iterations[i];
    os << i << ',' << to_string(it.kind) << ',' << it.features.size() << ',' << names(trace.schema, it.removed)
       << ',' << format_double(it.score) << ',' << (it.accepted ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string feature_manifest(const RfeTrace& trace) {
  std::string out;
  for (auto c : trace.best_features) out += (trace.schema ? trace.schema->names.at(c) : std::to_string(c)) + '\n';
  return out;
}

nlohmann::ordered_json to_json(const RfeTrace& trace) {
  nlohmann::ordered_json j;
  j["baseline_score"] = trace.baseline_score;
  j["best_score"] = trace.best_score;
  j["tolerance"] = trace.tolerance;
  j["best_features"] = trace.best_features.size();
  auto its = nlohmann::ordered_json::array();
  for (const auto& it : trace.iterations) {
    nlohmann::ordered_json e;
    e["kind"] = std::string(to_string(it.kind));
    e["n_features"] = it.features.size();
    auto removed = nlohmann::ordered_json::array();
    for (auto c : it.removed) removed.push_back(trace.schema ? trace.schema->names.at(c) : std::to_string(c));
    e["removed"] = removed;
    e["score"] = it.score;
    e["accepted"] = it.accepted;
    its.push_back(e);
  }
  j["iterations"] = its;
  return j;
}

}  // namespace explia::rfe
