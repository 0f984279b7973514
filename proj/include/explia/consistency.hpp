#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "explia/explain.hpp"

namespace explia::consistency {

using dataset::FeatureMatrix;
using dataset::SchemaPtr;
using explain::GlobalShapSummary;
using explain::LimeExplanation;
using explain::ShapValues;
using models::ImportanceVector;
using models::TrainedModel;

// A named non-negative score per feature; higher ranks first.
struct RankingSource {
  std::string name;
  SchemaPtr schema;
  std::vector<double> scores;
};

RankingSource from_importance(const ImportanceVector& importance, std::string name = {});
RankingSource from_shap(const GlobalShapSummary& summary, std::string name = "shap_global");
// Mean |surrogate weight| over the explained samples; unselected features count as 0.
RankingSource lime_aggregate(const std::vector<LimeExplanation>& explanations, std::string name = "lime_aggregate");

// Descending score, ties by lower feature index.
std::vector<std::size_t> rank_features(const std::vector<double>& scores);

double jaccard_top_k(const std::vector<std::size_t>& ranking_a, const std::vector<std::size_t>& ranking_b,
                     std::size_t k);
double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b);

inline const std::vector<std::size_t> kDefaultTopK{2, 5, 10};

struct PairComparison {
  std::size_t a = 0;
  std::size_t b = 0;
  std::vector<double> jaccard;  // parallel to RankingComparison::ks
  double kendall = 0.0;
};

struct RankingComparison {
  SchemaPtr schema;
  std::vector<std::string> sources;
  std::vector<std::vector<std::size_t>> rankings;
  std::vector<std::size_t> ks;
  std::vector<PairComparison> pairs;                // (a, b) with a < b, in source order
  std::vector<std::vector<std::size_t>> consensus;  // per k, ascending feature index

  const PairComparison& pair(std::size_t a, std::size_t b) const;
};

RankingComparison compare_rankings(const std::vector<RankingSource>& sources,
                                   const std::vector<std::size_t>& ks = kDefaultTopK);

struct LocalAgreement {
  std::size_t k = 0;
  int model_class = 0;
  int shap_class = 0;
  int lime_class = 0;
  double overlap = 0.0;                   // |top-k SHAP ∩ top-k LIME| / k
  std::size_t shared = 0;                 // size of that intersection
  std::optional<double> sign_agreement;   // over the intersection; empty intersection -> none
  std::vector<std::size_t> shap_top;
  std::vector<std::size_t> lime_top;
  std::uint64_t hash = 0;

  bool shap_matches_model() const { return shap_class == model_class; }
  bool shap_matches_lime() const { return shap_class == lime_class; }
  bool all_agree() const { return shap_matches_model() && shap_matches_lime(); }
};

// Class implied by base + sum(phi) against the model's decision threshold.
int shap_direction(const ShapValues& shap, double threshold);
// Class with the larger surrogate-predicted probability at the instance.
int lime_direction(const LimeExplanation& lime);

LocalAgreement cross_validate_local(const TrainedModel& model, const ShapValues& shap,
                                    const LimeExplanation& lime, std::size_t k);

struct AgreementConfig {
  explain::ShapConfig shap;
  explain::LimeParams lime;  // lime.seed is the master; each sample derives its own
  std::size_t k = 5;
  std::vector<std::size_t> ks = kDefaultTopK;
  std::size_t workers = 1;
};

struct SampleResult {
  std::size_t row = 0;  // caller's row id (e.g. test-set index)
  ShapValues shap;
  LimeExplanation lime;
  LocalAgreement agreement;
};

struct AgreementReport {
  std::vector<SampleResult> samples;
  RankingComparison rankings;
  std::size_t n = 0;
  double shap_model_rate = 0.0;  // fraction with SHAP class == model class
  double shap_lime_rate = 0.0;   // fraction with SHAP class == LIME class
  double mean_overlap = 0.0;
  std::optional<double> mean_sign_agreement;
};

// Explains every row of `samples` with SHAP and LIME, cross-validates them,
// and compares the SHAP/LIME aggregates with the `extra` sources.
AgreementReport agreement_report(const TrainedModel& model, const FeatureMatrix& samples,
                                 const std::vector<std::size_t>& row_ids, const FeatureMatrix& background,
                                 const std::vector<RankingSource>& extra, const AgreementConfig& config);

nlohmann::ordered_json to_json(const RankingComparison& comparison);
nlohmann::ordered_json to_json(const LocalAgreement& agreement, const SchemaPtr& schema);
nlohmann::ordered_json to_json(const AgreementReport& report);

}  // namespace explia::consistency
