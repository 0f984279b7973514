#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "explia/dataset.hpp"

namespace explia::models {

using dataset::FeatureMatrix;
using dataset::LabelVector;
using dataset::SchemaPtr;

// Internal nodes route x to `left` when x[feature] <= threshold.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output; for internal nodes the would-be leaf output
  double cover = 0.0;  // training weight (hessian sum for GBT, sample count for RF)
  double gain = 0.0;   // split gain; 0 at leaves

  bool is_leaf() const noexcept { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  std::size_t leaf_of(std::span<const double> x) const;
  double predict(std::span<const double> x) const { return nodes[leaf_of(x)].value; }
  std::size_t depth() const;
  // Throws CorruptDocument if the node table is not a well-formed binary tree.
  void validate(std::size_t n_features) const;
};

struct GbtParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 6;
  double learning_rate = 0.3;
  double lambda = 1.0;            // L2 penalty on leaf values
  double min_child_weight = 1.0;  // minimum hessian sum per child
  std::uint64_t seed = 0;
  bool allow_constant = false;
};

struct GbtModel {
  SchemaPtr schema;
  std::vector<DecisionTree> trees;
  double learning_rate = 0.3;
  double base_score = 0.0;  // prior log-odds
  GbtParams params;

  double margin(std::span<const double> x) const;
  double predict_proba(std::span<const double> x) const { return logistic(margin(x)); }
};

struct RfParams {
  std::size_t n_trees = 100;
  std::size_t mtry = 0;  // 0 means ceil(sqrt(p))
  std::size_t min_samples_leaf = 1;
  std::size_t max_depth = 0;  // 0 means unlimited
  bool bootstrap = true;
  std::uint64_t seed = 0;
  bool allow_constant = false;
  std::size_t workers = 1;
};

struct RfModel {
  SchemaPtr schema;
  std::vector<DecisionTree> trees;  // leaves hold the class-1 fraction
  std::vector<std::uint64_t> tree_seeds;
  std::size_t mtry = 0;
  RfParams params;

  double predict_proba(std::span<const double> x) const;
};

struct KnnParams {
  std::size_t k = 5;
};

struct KnnModel {
  SchemaPtr schema;
  Matrix train;
  std::vector<int> labels;  // binary
  std::size_t k = 5;

  // k nearest stored rows, ordered by (distance, index).
  std::vector<std::size_t> neighbors(std::span<const double> x) const;
  double predict_proba(std::span<const double> x) const;
  int predict_class(std::span<const double> x) const;
};

using TrainedModel = std::variant<GbtModel, RfModel, KnnModel>;

enum class ModelKind { Gbt, Rf, Knn };

ModelKind kind_of(const TrainedModel& model);
std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);
const SchemaPtr& schema_of(const TrainedModel& model);
bool is_tree_model(const TrainedModel& model);

GbtModel train_gbt(const FeatureMatrix& x, const LabelVector& y, const GbtParams& params = {});
RfModel train_rf(const FeatureMatrix& x, const LabelVector& y, const RfParams& params = {});
KnnModel train_knn(const FeatureMatrix& x, const LabelVector& y, std::size_t k = 5);

double predict_proba(const TrainedModel& model, std::span<const double> x);
int predict_class(const TrainedModel& model, std::span<const double> x);
std::vector<double> predict_proba(const TrainedModel& model, const FeatureMatrix& x);
std::vector<int> predict_class(const TrainedModel& model, const FeatureMatrix& x);

// Output space used for attribution: GBT log-odds margin, otherwise probability.
double explained_output(const TrainedModel& model, std::span<const double> x);
// Decision threshold in the explained output space (0 for margins, 0.5 otherwise).
double output_threshold(const TrainedModel& model);

struct Metrics {
  std::size_t n = 0;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Metrics metrics_from(std::span<const int> truth, std::span<const int> predicted);
Metrics evaluate(const TrainedModel& model, const FeatureMatrix& x, const LabelVector& y);

enum class ImportanceMethod { Gain, Permutation, ShapGlobal, LimeAggregate };
std::string_view to_string(ImportanceMethod method);

struct ImportanceVector {
  SchemaPtr schema;
  std::vector<double> scores;
  ImportanceMethod method = ImportanceMethod::Gain;
  std::string source;  // model or explainer id
};

ImportanceVector importance_gain(const TrainedModel& model);
ImportanceVector importance_permutation(const TrainedModel& model, const FeatureMatrix& x,
                                        const LabelVector& y, std::size_t repeats,
                                        std::uint64_t seed, std::size_t workers = 1);

inline constexpr int kModelFormatVersion = 1;

std::string serialize(const TrainedModel& model);
TrainedModel deserialize(std::string_view document);

}  // namespace explia::models
