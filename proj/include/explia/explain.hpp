#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "explia/models.hpp"

namespace explia::explain {

using dataset::FeatureMatrix;
using dataset::SchemaPtr;
using models::TrainedModel;

enum class OutputSpace { Margin, Probability };
std::string_view to_string(OutputSpace space);

// Hash of the explained feature values; binds explanations to one instance.
std::uint64_t instance_hash(std::span<const double> x);

// Shapley attribution of one prediction.
//
// Additivity: base_value + sum(phi) == output in `space`, exactly for the
// enumeration and tree methods and by construction for permutation sampling.
struct ShapValues {
  SchemaPtr schema;
  std::vector<double> instance;
  std::vector<double> phi;
  std::vector<double> std_error;  // sampling estimator only
  double base_value = 0.0;        // mean model output over the background set
  double output = 0.0;            // model output at the instance
  OutputSpace space = OutputSpace::Probability;
  // Mean probability over the background set; equals base_value in probability space.
  double base_probability = 0.0;
  std::uint64_t hash = 0;

  double sum_phi() const;
};

using OutputFn = std::function<double(std::span<const double>)>;

inline constexpr std::size_t kExactFeatureBudget = 15;

// Brute-force enumeration over all 2^p coalitions. Absent features take each
// background row's value in turn and the outputs are averaged.
ShapValues shap_exact(const OutputFn& f, std::span<const double> x, const FeatureMatrix& background,
                      OutputSpace space = OutputSpace::Probability);
ShapValues shap_exact(const TrainedModel& model, std::span<const double> x, const FeatureMatrix& background);

// Interventional path algorithm over each (instance, background row) pair.
// GBT attributions are in margin space (summed), RF in probability space (averaged).
ShapValues shap_tree(const TrainedModel& model, std::span<const double> x, const FeatureMatrix& background);

// Monte Carlo over feature orderings; every ordering telescopes from the
// background mean to the instance output, so additivity holds exactly.
ShapValues shap_sampling(const OutputFn& f, std::span<const double> x, const FeatureMatrix& background,
                         std::size_t n_permutations, std::uint64_t seed,
                         OutputSpace space = OutputSpace::Probability);
ShapValues shap_sampling(const TrainedModel& model, std::span<const double> x,
                         const FeatureMatrix& background, std::size_t n_permutations, std::uint64_t seed);

struct ShapConfig {
  std::size_t n_permutations = 200;  // non-tree models
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

// Tree method for ensembles, permutation sampling otherwise. The sampling seed
// is derived from (config.seed, row) so results do not depend on scheduling.
ShapValues shap_auto(const TrainedModel& model, std::span<const double> x, const FeatureMatrix& background,
                     const ShapConfig& config, std::size_t row = 0);

struct GlobalShapSummary {
  SchemaPtr schema;
  std::vector<double> mean_abs;                     // over every evaluated row
  std::vector<std::vector<double>> mean_abs_class;  // [predicted class][feature]
  std::vector<std::size_t> class_rows;              // rows per predicted class
  std::vector<std::size_t> ranking;                 // descending mean_abs, ties by index
  std::vector<std::size_t> significant;             // mean_abs > floor, in ranking order
  double floor = 0.0;
  OutputSpace space = OutputSpace::Probability;
};

inline constexpr double kDefaultSignificanceFraction = 0.001;

GlobalShapSummary summarize(const std::vector<ShapValues>& rows, std::span<const int> predicted,
                            double floor_fraction = kDefaultSignificanceFraction);
GlobalShapSummary shap_global(const TrainedModel& model, const FeatureMatrix& eval,
                              const FeatureMatrix& background, const ShapConfig& config = {},
                              double floor_fraction = kDefaultSignificanceFraction);

struct LimeParams {
  std::size_t n_samples = 5000;
  double kernel_width = 0.0;  // 0 means 0.75 * sqrt(p)
  double ridge = 1.0;
  std::size_t num_features = 10;
  std::uint64_t seed = 0;
  std::vector<double> scale;  // perturbation std per feature; empty means 1
};

struct LimeFeature {
  std::size_t feature = 0;
  double weight = 0.0;
};

struct LimeExplanation {
  SchemaPtr schema;
  std::vector<double> instance;
  std::vector<LimeFeature> features;  // selected, descending |weight|
  double intercept = 0.0;             // surrogate value at the zero vector
  double local_prediction = 0.0;      // surrogate value at the instance
  double model_probability = 0.0;     // model probability of class 1 at the instance
  double kernel_width = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  double score = 0.0;  // weighted R^2 of the final surrogate
  std::uint64_t hash = 0;

  // Weight per feature with zeros for unselected ones.
  std::vector<double> dense_weights() const;
};

LimeExplanation lime_explain(const OutputFn& proba, std::span<const double> x, const SchemaPtr& schema,
                             const LimeParams& params);
LimeExplanation lime_explain(const TrainedModel& model, std::span<const double> x, const LimeParams& params);

struct ForceEntry {
  std::size_t feature = 0;
  std::string name;
  double value = 0.0;
  double phi = 0.0;
  double cumulative = 0.0;  // running output after this feature
};

// Contributions sorted by signed phi (largest positive first). Positive phi
// pushes toward class 1 (attack); negative phi pushes toward class 0 (benign).
struct ForceBreakdown {
  double base_value = 0.0;
  double output = 0.0;
  OutputSpace space = OutputSpace::Probability;
  std::vector<ForceEntry> entries;
  std::vector<std::size_t> positive;  // feature indices, toward attack
  std::vector<std::size_t> negative;  // feature indices, toward benign
  std::vector<double> trajectory;     // base, then cumulative after each entry
};

ForceBreakdown force_breakdown(const ShapValues& shap);

}  // namespace explia::explain
