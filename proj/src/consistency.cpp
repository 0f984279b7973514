#include "explia/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace explia::consistency {

namespace {

// Values this close to the decision threshold are treated as lying on it, so
// the rounding left over from summing phi cannot flip an exact tie.
constexpr double kThresholdSlack = 1e-12;

std::vector<std::size_t> top_k(const std::vector<std::size_t>& ranking, std::size_t k) {
  k = std::min(k, ranking.size());
  return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(k)};
}

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<double> absolute(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::abs(x); });
  return out;
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

std::string feature_name(const SchemaPtr& schema, std::size_t j) {
  return schema && j < schema->names.size() ? schema->names[j] : "f" + std::to_string(j);
}

nlohmann::ordered_json names_of(const SchemaPtr& schema, const std::vector<std::size_t>& features) {
  auto out = nlohmann::ordered_json::array();
  for (auto j : features) out.push_back(feature_name(schema, j));
  return out;
}

}  // namespace

RankingSource from_importance(const ImportanceVector& importance, std::string name) {
  if (name.empty()) {
    name = importance.source.empty() ? std::string(models::to_string(importance.method))
                                     : importance.source + "_" + std::string(models::to_string(importance.method));
  }
  return {std::move(name), importance.schema, importance.scores};
}

RankingSource from_shap(const GlobalShapSummary& summary, std::string name) {
  return {std::move(name), summary.schema, summary.mean_abs};
}

RankingSource lime_aggregate(const std::vector<LimeExplanation>& explanations, std::string name) {
  if (explanations.empty()) throw Error(ErrorKind::EmptyInput, "no LIME explanations to aggregate");
  const std::size_t p = explanations.front().instance.size();
  RankingSource out{std::move(name), explanations.front().schema, std::vector<double>(p, 0.0)};
  for (const auto& e : explanations) {
    if (e.instance.size() != p) throw Error(ErrorKind::Schema, "LIME explanations differ in width");
    for (const auto& f : e.features) out.scores[f.feature] += std::abs(f.weight);
  }
  for (auto& s : out.scores) s /= static_cast<double>(explanations.size());
  return out;
}

std::vector<std::size_t> rank_features(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

double jaccard_top_k(const std::vector<std::size_t>& ranking_a, const std::vector<std::size_t>& ranking_b,
                     std::size_t k) {
  const auto a = sorted(top_k(ranking_a, k));
  const auto b = sorted(top_k(ranking_b, k));
  std::vector<std::size_t> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  return uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

// Tau-b. When either side has no untied pair the statistic is undefined; we
// return 1 if both sides are entirely tied and 0 otherwise.
double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::Schema, "rank correlation needs equal-length score vectors");
  const std::size_t n = a.size();
  double concordant = 0.0, discordant = 0.0, untied_a = 0.0, untied_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sa = sign(a[i] - a[j]);
      const int sb = sign(b[i] - b[j]);
      untied_a += sa != 0;
      untied_b += sb != 0;
      if (sa * sb > 0) concordant += 1.0;
      else if (sa * sb < 0) discordant += 1.0;
    }
  }
  if (untied_a == 0.0 || untied_b == 0.0) return untied_a == untied_b ? 1.0 : 0.0;
  return (concordant - discordant) / std::sqrt(untied_a * untied_b);
}

const PairComparison& RankingComparison::pair(std::size_t a, std::size_t b) const {
  if (a > b) std::swap(a, b);
  for (const auto& p : pairs) {
    if (p.a == a && p.b == b) return p;
  }
  throw Error(ErrorKind::Parameter, "no comparison for that source pair");
}

RankingComparison compare_rankings(const std::vector<RankingSource>& sources, const std::vector<std::size_t>& ks) {
  if (sources.size() < 2) throw Error(ErrorKind::Parameter, "ranking comparison needs at least two sources");
  const auto& first = sources.front();
  for (const auto& s : sources) {
    if (s.scores.size() != first.scores.size() ||
        (s.schema && first.schema && !s.schema->same_names(*first.schema))) {
      throw Error(ErrorKind::Schema, "source '" + s.name + "' is on a different feature schema than '" +
                                         first.name + "'");
    }
  }
  RankingComparison out;
  out.schema = first.schema;
  out.ks = ks;
  for (const auto& s : sources) {
    out.sources.push_back(s.name);
    out.rankings.push_back(rank_features(s.scores));
  }
  for (std::size_t a = 0; a < sources.size(); ++a) {
    for (std::size_t b = a + 1; b < sources.size(); ++b) {
      PairComparison pc;
      pc.a = a;
      pc.b = b;
      for (auto k : ks) pc.jaccard.push_back(jaccard_top_k(out.rankings[a], out.rankings[b], k));
      pc.kendall = kendall_tau_b(sources[a].scores, sources[b].scores);
      out.pairs.push_back(pc);
    }
  }
  for (auto k : ks) {
    auto common = sorted(top_k(out.rankings.front(), k));
    for (std::size_t s = 1; s < out.rankings.size(); ++s) {
      const auto other = sorted(top_k(out.rankings[s], k));
      std::vector<std::size_t> next;
      std::set_intersection(common.begin(), common.end(), other.begin(), other.end(), std::back_inserter(next));
      common = std::move(next);
    }
    out.consensus.push_back(std::move(common));
  }
  return out;
}

int shap_direction(const ShapValues& shap, double threshold) {
  const double implied = shap.base_value + shap.sum_phi();
  return implied - threshold > kThresholdSlack ? 1 : 0;
}

int lime_direction(const LimeExplanation& lime) { return lime.local_prediction > 0.5 ? 1 : 0; }

LocalAgreement cross_validate_local(const TrainedModel& model, const ShapValues& shap,
                                    const LimeExplanation& lime, std::size_t k) {
  if (shap.hash != lime.hash || shap.instance != lime.instance) {
    throw Error(ErrorKind::InstanceMismatch, "SHAP and LIME explanations are for different instances");
  }
  const std::size_t p = shap.phi.size();
  if (k < 1 || k > p) throw Error(ErrorKind::Parameter, "overlap k must be in [1, " + std::to_string(p) + "]");

  LocalAgreement out;
  out.k = k;
  out.hash = shap.hash;
  out.model_class = models::predict_class(model, shap.instance);
  out.shap_class = shap_direction(shap, models::output_threshold(model));
  out.lime_class = lime_direction(lime);

  const auto lime_w = lime.dense_weights();
  out.shap_top = top_k(rank_features(absolute(shap.phi)), k);
  out.lime_top = top_k(rank_features(absolute(lime_w)), k);
  const auto a = sorted(out.shap_top);
  const auto b = sorted(out.lime_top);
  std::vector<std::size_t> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  out.shared = inter.size();
  out.overlap = static_cast<double>(inter.size()) / static_cast<double>(k);
  if (!inter.empty()) {
    std::size_t same = 0;
    for (auto j : inter) same += sign(shap.phi[j]) == sign(lime_w[j]);
    out.sign_agreement = static_cast<double>(same) / static_cast<double>(inter.size());
  }
  return out;
}

AgreementReport agreement_report(const TrainedModel& model, const FeatureMatrix& samples,
                                 const std::vector<std::size_t>& row_ids, const FeatureMatrix& background,
                                 const std::vector<RankingSource>& extra, const AgreementConfig& config) {
  if (row_ids.size() != samples.rows()) throw Error(ErrorKind::Parameter, "row id count differs from sample count");
  const std::size_t n = samples.rows();
  AgreementReport out;
  out.n = n;
  out.samples.resize(n);
  parallel_for(n, config.workers, [&](std::size_t i) {
    auto& s = out.samples[i];
    s.row = row_ids[i];
    s.shap = explain::shap_auto(model, samples.row(i), background, config.shap, row_ids[i]);
    auto lime_params = config.lime;
    lime_params.seed = derive_seed(config.lime.seed, row_ids[i]);
    s.lime = explain::lime_explain(model, samples.row(i), lime_params);
    s.agreement = cross_validate_local(model, s.shap, s.lime, std::min(config.k, samples.cols()));
  });

  std::vector<RankingSource> sources = extra;
  if (n > 0) {
    std::size_t shap_model = 0, shap_lime = 0, signed_n = 0;
    double overlap = 0.0, sign_sum = 0.0;
    std::vector<ShapValues> shap_rows;
    std::vector<LimeExplanation> lime_rows;
    std::vector<int> predicted;
    for (const auto& s : out.samples) {
      shap_model += s.agreement.shap_matches_model();
      shap_lime += s.agreement.shap_matches_lime();
      overlap += s.agreement.overlap;
      if (s.agreement.sign_agreement) {
        sign_sum += *s.agreement.sign_agreement;
        ++signed_n;
      }
      shap_rows.push_back(s.shap);
      lime_rows.push_back(s.lime);
      predicted.push_back(s.agreement.model_class);
    }
    out.shap_model_rate = static_cast<double>(shap_model) / static_cast<double>(n);
    out.shap_lime_rate = static_cast<double>(shap_lime) / static_cast<double>(n);
    out.mean_overlap = overlap / static_cast<double>(n);
    if (signed_n > 0) out.mean_sign_agreement = sign_sum / static_cast<double>(signed_n);
    sources.push_back(from_shap(explain::summarize(shap_rows, predicted)));
    sources.push_back(lime_aggregate(lime_rows));
  }
  if (sources.size() >= 2) {
    out.rankings = compare_rankings(sources, config.ks);
  } else {
    out.rankings.ks = config.ks;
    for (const auto& s : sources) {
      out.rankings.schema = s.schema;
      out.rankings.sources.push_back(s.name);
      out.rankings.rankings.push_back(rank_features(s.scores));
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const RankingComparison& comparison) {
  nlohmann::ordered_json j;
  j["top_k"] = comparison.ks;
  auto sources = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < comparison.sources.size(); ++s) {
    nlohmann::ordered_json e;
    e["name"] = comparison.sources[s];
    e["ranking"] = names_of(comparison.schema, comparison.rankings[s]);
    sources.push_back(e);
  }
  j["sources"] = sources;
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : comparison.pairs) {
    nlohmann::ordered_json e;
    e["a"] = comparison.sources[p.a];
    e["b"] = comparison.sources[p.b];
    nlohmann::ordered_json jac;
    for (std::size_t i = 0; i < comparison.ks.size(); ++i) jac[std::to_string(comparison.ks[i])] = p.jaccard[i];
    e["jaccard"] = jac;
    e["kendall_tau_b"] = p.kendall;
    pairs.push_back(e);
  }
  j["pairs"] = pairs;
  nlohmann::ordered_json consensus = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < comparison.consensus.size(); ++i) {
    consensus[std::to_string(comparison.ks[i])] = names_of(comparison.schema, comparison.consensus[i]);
  }
  j["consensus"] = consensus;
  return j;
}

nlohmann::ordered_json to_json(const LocalAgreement& agreement, const SchemaPtr& schema) {
  nlohmann::ordered_json j;
  j["model_class"] = agreement.model_class;
  j["shap_class"] = agreement.shap_class;
  j["lime_class"] = agreement.lime_class;
  j["shap_matches_model"] = agreement.shap_matches_model();
  j["shap_matches_lime"] = agreement.shap_matches_lime();
  j["k"] = agreement.k;
  j["overlap"] = agreement.overlap;
  j["shared"] = agreement.shared;
  j["sign_agreement"] = agreement.sign_agreement ? nlohmann::ordered_json(*agreement.sign_agreement) : nlohmann::ordered_json();
  j["shap_top"] = names_of(schema, agreement.shap_top);
  j["lime_top"] = names_of(schema, agreement.lime_top);
  return j;
}

nlohmann::ordered_json to_json(const AgreementReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json summary;
  summary["samples"] = report.n;
  summary["shap_model_agreement"] = report.shap_model_rate;
  summary["shap_lime_agreement"] = report.shap_lime_rate;
  summary["mean_top_k_overlap"] = report.mean_overlap;
  summary["mean_sign_agreement"] =
      report.mean_sign_agreement ? nlohmann::ordered_json(*report.mean_sign_agreement) : nlohmann::ordered_json();
  j["summary"] = summary;
  auto local = nlohmann::ordered_json::array();
  for (const auto& s : report.samples) {
    nlohmann::ordered_json e;
    e["row"] = s.row;
    e["shap_space"] = std::string(explain::to_string(s.shap.space));
    e["shap_base"] = s.shap.base_value;
    e["shap_base_probability"] = s.shap.base_probability;
    e["shap_output"] = s.shap.output;
    e["lime_local_prediction"] = s.lime.local_prediction;
    e["model_probability"] = s.lime.model_probability;
    e["agreement"] = to_json(s.agreement, s.shap.schema);
    local.push_back(e);
  }
  j["local"] = local;
  j["rankings"] = to_json(report.rankings);
  return j;
}

}  // namespace explia::consistency
