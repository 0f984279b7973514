#include "explia/explain.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>

namespace explia::explain {

namespace {

using models::DecisionTree;
using models::GbtModel;
using models::RfModel;

// shapley_weights(n)[s] = s! (n-1-s)! / n!
std::vector<double> shapley_weights(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t s = 0; s < n; ++s) {
    w[s] = std::exp(std::lgamma(static_cast<double>(s) + 1.0) +
                    std::lgamma(static_cast<double>(n - s)) - std::lgamma(static_cast<double>(n) + 1.0));
  }
  return w;
}

void check_background(const FeatureMatrix& background, std::size_t p) {
  if (background.rows() == 0) throw Error(ErrorKind::EmptyInput, "background set is empty");
  if (background.cols() != p) {
    throw Error(ErrorKind::Schema, "background has " + std::to_string(background.cols()) +
                                       " features, instance has " + std::to_string(p));
  }
}

SchemaPtr schema_for(const FeatureMatrix& background) { return background.schema(); }

OutputSpace space_of(const TrainedModel& model) {
  return models::kind_of(model) == models::ModelKind::Gbt ? OutputSpace::Margin : OutputSpace::Probability;
}

OutputFn output_fn(const TrainedModel& model) {
  return [&model](std::span<const double> row) { return models::explained_output(model, row); };
}

double mean_probability(const TrainedModel& model, const FeatureMatrix& background) {
  double s = 0.0;
  for (std::size_t r = 0; r < background.rows(); ++r) s += models::predict_proba(model, background.row(r));
  return s / static_cast<double>(background.rows());
}

void attach_model(ShapValues& out, const TrainedModel& model, const FeatureMatrix& background) {
  out.schema = models::schema_of(model);
  out.space = space_of(model);
  out.base_probability =
      out.space == OutputSpace::Probability ? out.base_value : mean_probability(model, background);
}

void check_model_schema(const TrainedModel& model, std::span<const double> x, const FeatureMatrix& background) {
  const auto& schema = models::schema_of(model);
  if (x.size() != schema->names.size()) {
    throw Error(ErrorKind::Schema, "instance has " + std::to_string(x.size()) + " features, model expects " +
                                       std::to_string(schema->names.size()));
  }
  check_background(background, x.size());
  if (background.schema() && !background.schema()->same_names(*schema)) {
    throw Error(ErrorKind::Schema, "background features differ from the model's");
  }
}

// Interventional path algorithm for a single tree and a single background row.
// Along each root-to-leaf path a feature is "from x" or "from z" only where
// the two rows route differently; the leaf value is then credited to those
// features with the Shapley weight of the coalition structure.
class PairShap {
 public:
  PairShap(std::span<const double> x, std::vector<double>& phi, std::size_t p)
      : x_(x), phi_(phi), state_(p, 0), weights_(p + 1) {
    for (std::size_t n = 1; n <= p; ++n) weights_[n] = shapley_weights(n);
  }

  void run(const DecisionTree& tree, std::span<const double> z, double scale) {
    tree_ = &tree;
    z_ = z;
    scale_ = scale;
    visit(0, 0, 0);
  }

 private:
  void visit(int id, std::size_t nx, std::size_t nz) {
    const auto& node = tree_->nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      const std::size_t n = nx + nz;
      if (n == 0) return;
      const double v = node.value * scale_;
      const auto& w = weights_[n];
      for (auto f : path_) {
        if (state_[f] == 1) phi_[f] += w[nx - 1] * v;
        else phi_[f] -= w[nx] * v;
      }
      return;
    }
    const auto f = static_cast<std::size_t>(node.feature);
    const int x_child = x_[f] <= node.threshold ? node.left : node.right;
    const int z_child = z_[f] <= node.threshold ? node.left : node.right;
    if (state_[f] == 1) return visit(x_child, nx, nz);
    if (state_[f] == 2) return visit(z_child, nx, nz);
    if (x_child == z_child) return visit(x_child, nx, nz);
    path_.push_back(f);
    state_[f] = 1;
    visit(x_child, nx + 1, nz);
    state_[f] = 2;
    visit(z_child, nx, nz + 1);
    state_[f] = 0;
    path_.pop_back();
  }

  std::span<const double> x_;
  std::span<const double> z_;
  std::vector<double>& phi_;
  std::vector<std::uint8_t> state_;
  std::vector<std::size_t> path_;
  std::vector<std::vector<double>> weights_;
  const DecisionTree* tree_ = nullptr;
  double scale_ = 1.0;
};

}  // namespace

std::string_view to_string(OutputSpace space) {
  return space == OutputSpace::Margin ? "margin" : "probability";
}

std::uint64_t instance_hash(std::span<const double> x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : x) {
    auto bits = std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

double ShapValues::sum_phi() const { return std::accumulate(phi.begin(), phi.end(), 0.0); }

ShapValues shap_exact(const OutputFn& f, std::span<const double> x, const FeatureMatrix& background,
                      OutputSpace space) {
  const std::size_t p = x.size();
  if (p > kExactFeatureBudget) {
    throw Error(ErrorKind::Budget, "exact Shapley enumeration over " + std::to_string(p) +
                                       " features exceeds the budget of " +
                                       std::to_string(kExactFeatureBudget) +
                                       "; use the tree or sampling method");
  }
  check_background(background, p);
  const std::size_t n_sets = std::size_t{1} << p;
  const std::size_t nb = background.rows();

  std::vector<double> value(n_sets);
  std::vector<double> hybrid(p);
  for (std::size_t mask = 0; mask < n_sets; ++mask) {
    double s = 0.0;
    for (std::size_t r = 0; r < nb; ++r) {
      const auto z = background.row(r);
      for (std::size_t j = 0; j < p; ++j) hybrid[j] = (mask >> j) & 1 ? x[j] : z[j];
      s += f(hybrid);
    }
    value[mask] = s / static_cast<double>(nb);
  }

  const auto w = shapley_weights(p);
  ShapValues out;
  out.schema = schema_for(background);
  out.instance.assign(x.begin(), x.end());
  out.phi.assign(p, 0.0);
  for (std::size_t mask = 0; mask < n_sets; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t i = 0; i < p; ++i) {
      if ((mask >> i) & 1) continue;
      out.phi[i] += w[size] * (value[mask | (std::size_t{1} << i)] - value[mask]);
    }
  }
  out.base_value = value[0];
  out.output = f(x);
  out.space = space;
  out.base_probability = out.base_value;
  out.hash = instance_hash(x);
  return out;
}

ShapValues shap_exact(const TrainedModel& model, std::span<const double> x, const FeatureMatrix& background) {
  check_model_schema(model, x, background);
  auto out = shap_exact(output_fn(model), x, background, space_of(model));
  attach_model(out, model, background);
  return out;
}

ShapValues shap_tree(const TrainedModel& model, std::span<const double> x, const FeatureMatrix& background) {
  const std::vector<DecisionTree>* trees = nullptr;
  double scale = 1.0;
  if (const auto* gbt = std::get_if<GbtModel>(&model)) {
    trees = &gbt->trees;
    scale = gbt->learning_rate;
  } else if (const auto* rf = std::get_if<RfModel>(&model)) {
    trees = &rf->trees;
    scale = rf->trees.empty() ? 1.0 : 1.0 / static_cast<double>(rf->trees.size());
  } else {
    throw Error(ErrorKind::MethodMismatch, "tree Shapley method needs a GBT or RF model, got " +
                                               std::string(models::to_string(models::kind_of(model))));
  }
  check_model_schema(model, x, background);
  const std::size_t p = x.size();
  const std::size_t nb = background.rows();

  ShapValues out;
  out.instance.assign(x.begin(), x.end());
  out.phi.assign(p, 0.0);
  // Sum over background rows first, then divide once.
  PairShap pair(x, out.phi, p);
  double base = 0.0;
  for (std::size_t r = 0; r < nb; ++r) {
    const auto z = background.row(r);
    for (const auto& tree : *trees) pair.run(tree, z, scale);
    base += models::explained_output(model, z);
  }
  for (auto& v : out.phi) v /= static_cast<double>(nb);
  out.base_value = base / static_cast<double>(nb);
  out.output = models::explained_output(model, x);
  out.hash = instance_hash(x);
  attach_model(out, model, background);
  return out;
}

ShapValues shap_sampling(const OutputFn& f, std::span<const double> x, const FeatureMatrix& background,
                         std::size_t n_permutations, std::uint64_t seed, OutputSpace space) {
  if (n_permutations < 1) throw Error(ErrorKind::Parameter, "n_permutations must be at least 1");
  const std::size_t p = x.size();
  check_background(background, p);
  const std::size_t nb = background.rows();

  auto mean_output = [&](const Matrix& rows) {
    double s = 0.0;
    for (std::size_t r = 0; r < nb; ++r) s += f(rows.row(r));
    return s / static_cast<double>(nb);
  };

  const double base = mean_output(background.values());
  std::vector<double> sum(p, 0.0), sum_sq(p, 0.0);
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  Matrix hybrid;
  for (std::size_t t = 0; t < n_permutations; ++t) {
    std::shuffle(order.begin(), order.end(), rng);
    hybrid = background.values();
    double prev = base;
    for (std::size_t j : order) {
      for (std::size_t r = 0; r < nb; ++r) hybrid(r, j) = x[j];
      const double cur = mean_output(hybrid);
      const double d = cur - prev;
      sum[j] += d;
      sum_sq[j] += d * d;
      prev = cur;
    }
  }

  ShapValues out;
  out.schema = schema_for(background);
  out.instance.assign(x.begin(), x.end());
  out.phi.resize(p);
  out.std_error.assign(p, 0.0);
  const auto n = static_cast<double>(n_permutations);
  for (std::size_t j = 0; j < p; ++j) {
    out.phi[j] = sum[j] / n;
    if (n_permutations > 1) {
      const double var = std::max(0.0, (sum_sq[j] - n * out.phi[j] * out.phi[j]) / (n - 1.0));
      out.std_error[j] = std::sqrt(var / n);
    }
  }
  out.base_value = base;
  out.output = f(x);
  out.space = space;
  out.base_probability = base;
  out.hash = instance_hash(x);
  return out;
}

ShapValues shap_sampling(const TrainedModel& model, std::span<const double> x,
                         const FeatureMatrix& background, std::size_t n_permutations, std::uint64_t seed) {
  check_model_schema(model, x, background);
  auto out = shap_sampling(output_fn(model), x, background, n_permutations, seed, space_of(model));
  attach_model(out, model, background);
  return out;
}

ShapValues shap_auto(const TrainedModel& model, std::span<const double> x, const FeatureMatrix& background,
                     const ShapConfig& config, std::size_t row) {
  if (models::is_tree_model(model)) return shap_tree(model, x, background);
  return shap_sampling(model, x, background, config.n_permutations, derive_seed(config.seed, row));
}

GlobalShapSummary summarize(const std::vector<ShapValues>& rows, std::span<const int> predicted,
                            double floor_fraction) {
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, "no explanations to summarize");
  if (predicted.size() != rows.size()) throw Error(ErrorKind::Parameter, "predicted class count mismatch");
  const std::size_t p = rows.front().phi.size();
  GlobalShapSummary out;
  out.schema = rows.front().schema;
  out.space = rows.front().space;
  out.mean_abs.assign(p, 0.0);
  out.mean_abs_class.assign(2, std::vector<double>(p, 0.0));
  out.class_rows.assign(2, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto c = static_cast<std::size_t>(predicted[i] == 1);
    ++out.class_rows[c];
    for (std::size_t j = 0; j < p; ++j) {
      const double a = std::abs(rows[i].phi[j]);
      out.mean_abs[j] += a;
      out.mean_abs_class[c][j] += a;
    }
  }
  for (auto& v : out.mean_abs) v /= static_cast<double>(rows.size());
  for (std::size_t c = 0; c < 2; ++c) {
    if (out.class_rows[c] == 0) continue;
    for (auto& v : out.mean_abs_class[c]) v /= static_cast<double>(out.class_rows[c]);
  }
  out.ranking.resize(p);
  std::iota(out.ranking.begin(), out.ranking.end(), std::size_t{0});
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return out.mean_abs[a] > out.mean_abs[b]; });
  const double total = std::accumulate(out.mean_abs.begin(), out.mean_abs.end(), 0.0);
  out.floor = floor_fraction * total;
  for (auto j : out.ranking) {
    if (out.mean_abs[j] > out.floor) out.significant.push_back(j);
  }
  return out;
}

GlobalShapSummary shap_global(const TrainedModel& model, const FeatureMatrix& eval,
                              const FeatureMatrix& background, const ShapConfig& config,
                              double floor_fraction) {
  if (eval.rows() == 0) throw Error(ErrorKind::EmptyInput, "evaluation set is empty");
  std::vector<ShapValues> rows(eval.rows());
  std::vector<int> predicted(eval.rows());
  parallel_for(eval.rows(), config.workers, [&](std::size_t i) {
    rows[i] = shap_auto(model, eval.row(i), background, config, i);
    predicted[i] = models::predict_class(model, eval.row(i));
  });
  return summarize(rows, predicted, floor_fraction);
}

std::vector<double> LimeExplanation::dense_weights() const {
  std::vector<double> w(instance.size(), 0.0);
  for (const auto& f : features) w[f.feature] = f.weight;
  return w;
}

LimeExplanation lime_explain(const OutputFn& proba, std::span<const double> x, const SchemaPtr& schema,
                             const LimeParams& params) {
  const std::size_t p = x.size();
  const std::size_t k = params.num_features;
  if (p == 0) throw Error(ErrorKind::EmptyInput, "instance has no features");
  if (k < 1 || k > p) {
    throw Error(ErrorKind::Parameter, "num_features must be in [1, " + std::to_string(p) + "], got " +
                                          std::to_string(k));
  }
  if (params.n_samples < k + 1) {
    throw Error(ErrorKind::Parameter, "n_samples must be at least num_features + 1");
  }
  if (params.kernel_width < 0.0 || !std::isfinite(params.kernel_width)) {
    throw Error(ErrorKind::KernelWidth, "kernel width must be positive");
  }
  if (params.ridge < 0.0) throw Error(ErrorKind::Parameter, "ridge penalty must be non-negative");
  std::vector<double> scale = params.scale.empty() ? std::vector<double>(p, 1.0) : params.scale;
  if (scale.size() != p) throw Error(ErrorKind::Parameter, "scale vector length differs from instance");
  for (double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorKind::Parameter, "perturbation scale must be positive");
  }
  const double width = params.kernel_width > 0.0 ? params.kernel_width : 0.75 * std::sqrt(static_cast<double>(p));

  const std::size_t n = params.n_samples;
  Eigen::MatrixXd u(n, p);
  Eigen::VectorXd y(n), pi(n);
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(p);
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double e = normal(rng);
      u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e;
      z[j] = x[j] + scale[j] * e;
      d2 += e * e;
    }
    y[static_cast<Eigen::Index>(i)] = proba(z);
    pi[static_cast<Eigen::Index>(i)] = std::exp(-d2 / (width * width));
  }
  const double total = pi.sum();
  if (!(total > 1e-8)) {
    throw Error(ErrorKind::KernelWidth, "kernel width " + format_double(width) +
                                            " gives every perturbation negligible weight; use a larger width");
  }

  // Weighted centring leaves an unpenalized intercept.
  const Eigen::RowVectorXd u_mean = (pi.transpose() * u) / total;
  const double y_mean = pi.dot(y) / total;
  const Eigen::MatrixXd uc = u.rowwise() - u_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  const Eigen::MatrixXd gram = uc.transpose() * pi.asDiagonal() * uc;
  const Eigen::VectorXd cross = uc.transpose() * (pi.array() * yc.array()).matrix();
  const double syy = (pi.array() * yc.array().square()).sum();

  auto fit = [&](const std::vector<std::size_t>& cols, Eigen::VectorXd& w) {
    const auto m = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd g(m, m);
    Eigen::VectorXd c(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      c[a] = cross[static_cast<Eigen::Index>(cols[static_cast<std::size_t>(a)])];
      for (Eigen::Index b = 0; b < m; ++b) {
        g(a, b) = gram(static_cast<Eigen::Index>(cols[static_cast<std::size_t>(a)]),
                       static_cast<Eigen::Index>(cols[static_cast<std::size_t>(b)]));
      }
    }
    g.diagonal().array() += params.ridge;
    w = g.ldlt().solve(c);
    return syy - 2.0 * w.dot(c) + w.dot(g * w) - params.ridge * w.squaredNorm();
  };

  std::vector<std::size_t> selected;
  std::vector<bool> used(p, false);
  Eigen::VectorXd w;
  while (selected.size() < k) {
    double best_rss = std::numeric_limits<double>::infinity();
    std::size_t best = p;
    for (std::size_t j = 0; j < p; ++j) {
      if (used[j]) continue;
      auto trial = selected;
      trial.push_back(j);
      const double rss = fit(trial, w);
      if (rss < best_rss) {
        best_rss = rss;
        best = j;
      }
    }
    if (best == p) best = static_cast<std::size_t>(std::find(used.begin(), used.end(), false) - used.begin());
    used[best] = true;
    selected.push_back(best);
  }
  std::sort(selected.begin(), selected.end());
  const double rss = fit(selected, w);

  LimeExplanation out;
  out.schema = schema;
  out.instance.assign(x.begin(), x.end());
  double at_zero = 0.0;
  double centre = 0.0;
  for (std::size_t a = 0; a < selected.size(); ++a) {
    const double wa = w[static_cast<Eigen::Index>(a)];
    out.features.push_back({selected[a], wa});
    centre += wa * u_mean[static_cast<Eigen::Index>(selected[a])];
    at_zero += wa * x[selected[a]] / scale[selected[a]];
  }
  std::stable_sort(out.features.begin(), out.features.end(),
                   [](const LimeFeature& a, const LimeFeature& b) { return std::abs(a.weight) > std::abs(b.weight); });
  out.local_prediction = y_mean - centre;
  out.intercept = out.local_prediction - at_zero;
  out.model_probability = proba(x);
  out.kernel_width = width;
  out.n_samples = n;
  out.seed = params.seed;
  out.score = syy > 0.0 ? 1.0 - rss / syy : 1.0;
  out.hash = instance_hash(x);
  return out;
}

LimeExplanation lime_explain(const TrainedModel& model, std::span<const double> x, const LimeParams& params) {
  const auto& schema = models::schema_of(model);
  if (x.size() != schema->names.size()) {
    throw Error(ErrorKind::Schema, "instance has " + std::to_string(x.size()) + " features, model expects " +
                                       std::to_string(schema->names.size()));
  }
  return lime_explain([&model](std::span<const double> row) { return models::predict_proba(model, row); }, x,
                      schema, params);
}

ForceBreakdown force_breakdown(const ShapValues& shap) {
  ForceBreakdown out;
  out.base_value = shap.base_value;
  out.output = shap.output;
  out.space = shap.space;
  std::vector<std::size_t> order(shap.phi.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return shap.phi[a] > shap.phi[b]; });
  out.trajectory.push_back(shap.base_value);
  double running = shap.base_value;
  for (auto j : order) {
    running += shap.phi[j];
    ForceEntry e;
    e.feature = j;
    e.name = shap.schema && j < shap.schema->names.size() ? shap.schema->names[j] : "f" + std::to_string(j);
    e.value = j < shap.instance.size() ? shap.instance[j] : 0.0;
    e.phi = shap.phi[j];
    e.cumulative = running;
    out.entries.push_back(e);
    out.trajectory.push_back(running);
    if (e.phi > 0.0) out.positive.push_back(j);
    else if (e.phi < 0.0) out.negative.push_back(j);
  }
  return out;
}

}  // namespace explia::explain
