#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "explia/consistency.hpp"

namespace explia::rfe {

using dataset::FeatureMatrix;
using dataset::LabelVector;
using dataset::SchemaPtr;
using models::ImportanceVector;
using models::TrainedModel;

enum class ImportanceSource { Gain, Permutation, ShapGlobal };
std::string_view to_string(ImportanceSource source);
ImportanceSource parse_importance_source(std::string_view text);

struct RfeConfig {
  std::size_t min_features = 5;
  double tolerance = 0.0;
  bool batch_drop_zero = true;
  ImportanceSource importance_source = ImportanceSource::Gain;
  std::size_t permutation_repeats = 5;
  std::size_t shap_background = 100;
  std::size_t shap_eval = 200;
  explain::ShapConfig shap;
  double validation_fraction = 0.2;  // carve used by the split-seed overload
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

enum class StepKind { Baseline, Batch, Single };
std::string_view to_string(StepKind kind);

struct RfeIteration {
  StepKind kind = StepKind::Baseline;
  std::vector<std::size_t> features;  // column indices into the original schema, ascending
  std::vector<std::size_t> removed;
  double score = 0.0;
  bool accepted = false;
};

struct RfeTrace {
  SchemaPtr schema;  // schema of the full input
  std::vector<RfeIteration> iterations;
  std::vector<std::size_t> best_features;
  double best_score = 0.0;
  double baseline_score = 0.0;
  double tolerance = 0.0;
};

using Trainer = std::function<TrainedModel(const FeatureMatrix&, const LabelVector&)>;

struct RfeResult {
  RfeTrace trace;
  TrainedModel model;  // retrained on the best set
};

// Kept feature indices: every feature whose importance is not exactly zero.
std::vector<std::size_t> drop_zero_importance(const ImportanceVector& importance);

// Union of each source's top-m features, ascending.
std::vector<std::size_t> xai_guided_seed(const std::vector<consistency::RankingSource>& sources, std::size_t m = 20);
std::vector<std::size_t> xai_guided_seed(const explain::GlobalShapSummary& shap,
                                         const consistency::RankingSource& lime_aggregate,
                                         const ImportanceVector& gain, std::size_t m = 20);

// Scores on an explicit held-out fold. `seed_set`, when given, restricts the
// batch step to those features on top of the zero-importance drop.
RfeResult rfe_run(const Trainer& train, const FeatureMatrix& x, const LabelVector& y, const FeatureMatrix& score_x,
                  const LabelVector& score_y, const RfeConfig& config,
                  const std::optional<std::vector<std::size_t>>& seed_set = std::nullopt);

// Carves a stratified validation fold from (x, y) with `split_seed`.
RfeResult rfe_run(const Trainer& train, const FeatureMatrix& x, const LabelVector& y, std::uint64_t split_seed,
                  const RfeConfig& config, const std::optional<std::vector<std::size_t>>& seed_set = std::nullopt);

// Importance of a model trained on `x` as configured.
ImportanceVector importance_for(const TrainedModel& model, const FeatureMatrix& x_train, const FeatureMatrix& score_x,
                                const LabelVector& score_y, const RfeConfig& config);

std::string trace_csv(const RfeTrace& trace);
std::string feature_manifest(const RfeTrace& trace);
nlohmann::ordered_json to_json(const RfeTrace& trace);

}  // namespace explia::rfe
