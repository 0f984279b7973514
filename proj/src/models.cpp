#include "explia/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "tree_grower.hpp"

namespace explia::models {

std::size_t DecisionTree::leaf_of(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return i;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[i].is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(nodes[i].left), d + 1);
      stack.emplace_back(static_cast<std::size_t>(nodes[i].right), d + 1);
    }
  }
  return deepest;
}

void DecisionTree::validate(std::size_t n_features) const {
  if (nodes.empty()) throw Error(ErrorKind::CorruptDocument, "tree has no nodes");
  std::vector<int> parents(nodes.size(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (!std::isfinite(n.value)) throw Error(ErrorKind::CorruptDocument, "non-finite leaf value");
    if (n.is_leaf()) continue;
    if (static_cast<std::size_t>(n.feature) >= n_features) {
      throw Error(ErrorKind::CorruptDocument, "feature index out of range");
    }
    for (int c : {n.left, n.right}) {
      if (c <= static_cast<int>(i) || static_cast<std::size_t>(c) >= nodes.size()) {
        throw Error(ErrorKind::CorruptDocument, "child index out of range");
      }
      ++parents[static_cast<std::size_t>(c)];
    }
  }
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (parents[i] != 1) throw Error(ErrorKind::CorruptDocument, "node without a unique parent");
  }
}

double GbtModel::margin(std::span<const double> x) const {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return base_score + learning_rate * sum;
}

double RfModel::predict_proba(std::span<const double> x) const {
  if (trees.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(x);
  return sum / static_cast<double>(trees.size());
}

std::vector<std::size_t> KnnModel::neighbors(std::span<const double> x) const {
  std::vector<std::pair<double, std::size_t>> dist(train.rows());
  for (std::size_t i = 0; i < train.rows(); ++i) {
    const auto r = train.row(i);
    double d = 0.0;
    for (std::size_t c = 0; c < r.size(); ++c) d += (x[c] - r[c]) * (x[c] - r[c]);
    dist[i] = {d, i};
  }
  const auto kk = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
  std::vector<std::size_t> out(kk);
  for (std::size_t i = 0; i < kk; ++i) out[i] = dist[i].second;
  return out;
}

double KnnModel::predict_proba(std::span<const double> x) const {
  const auto nb = neighbors(x);
  std::size_t ones = 0;
  for (auto i : nb) ones += labels[i] == 1;
  return nb.empty() ? 0.0 : static_cast<double>(ones) / static_cast<double>(nb.size());
}

namespace {

// Majority vote; ties go to the class with the smaller summed distance, then
// the lower label id.
int knn_vote(const KnnModel& m, std::span<const std::size_t> nb, std::span<const double> sq_dist) {
  std::size_t votes[2] = {0, 0};
  double dist[2] = {0.0, 0.0};
  for (std::size_t j = 0; j < nb.size(); ++j) {
    const int l = m.labels[nb[j]];
    ++votes[l];
    dist[l] += std::sqrt(sq_dist[j]);
  }
  if (votes[0] != votes[1]) return votes[1] > votes[0] ? 1 : 0;
  return dist[1] < dist[0] ? 1 : 0;
}

double sq_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) d += (a[c] - b[c]) * (a[c] - b[c]);
  return d;
}

}  // namespace

int KnnModel::predict_class(std::span<const double> x) const {
  const auto nb = neighbors(x);
  std::vector<double> d(nb.size());
  for (std::size_t j = 0; j < nb.size(); ++j) d[j] = sq_distance(x, train.row(nb[j]));
  return knn_vote(*this, nb, d);
}

ModelKind kind_of(const TrainedModel& model) { return static_cast<ModelKind>(model.index()); }

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Gbt: return "gbt";
    case ModelKind::Rf: return "rf";
    case ModelKind::Knn: return "knn";
  }
  return "gbt";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "gbt") return ModelKind::Gbt;
  if (text == "rf") return ModelKind::Rf;
  if (text == "knn") return ModelKind::Knn;
  throw Error(ErrorKind::Parameter, "unknown model kind '" + std::string(text) + "'");
}

const SchemaPtr& schema_of(const TrainedModel& model) {
  return std::visit([](const auto& m) -> const SchemaPtr& { return m.schema; }, model);
}

bool is_tree_model(const TrainedModel& model) { return kind_of(model) != ModelKind::Knn; }

namespace {

std::vector<int> binary_targets(const FeatureMatrix& x, const LabelVector& y, bool allow_constant) {
  if (x.rows() != y.size()) throw Error(ErrorKind::Parameter, "matrix/label length mismatch");
  if (x.rows() == 0) throw Error(ErrorKind::EmptyInput, "no training rows");
  if (y.level != dataset::LabelLevel::Binary) {
    throw Error(ErrorKind::Parameter, "training labels must be binary");
  }
  std::size_t ones = 0;
  for (int v : y.values) {
    if (v != 0 && v != 1) throw Error(ErrorKind::Parameter, "label outside {0,1}");
    ones += v == 1;
  }
  if ((ones == 0 || ones == y.size()) && !allow_constant) {
    throw Error(ErrorKind::DegenerateLabel,
                "training labels contain a single class; set allow_constant to fit a constant model");
  }
  return y.values;
}

}  // namespace

GbtModel train_gbt(const FeatureMatrix& x, const LabelVector& y, const GbtParams& params) {
  const auto targets = binary_targets(x, y, params.allow_constant);
  if (params.learning_rate <= 0.0) throw Error(ErrorKind::Parameter, "learning rate must be positive");
  const std::size_t n = x.rows();

  GbtModel model;
  model.schema = x.schema();
  model.learning_rate = params.learning_rate;
  model.params = params;
  const double prior = std::clamp(
      static_cast<double>(std::count(targets.begin(), targets.end(), 1)) / static_cast<double>(n),
      1e-6, 1.0 - 1e-6);
  model.base_score = std::log(prior / (1.0 - prior));

  const auto order = detail::presort(x.values());
  std::vector<std::uint32_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0u);
  std::vector<double> margin(n, model.base_score), grad(n), hess(n);

  detail::NewtonCriterion crit{grad, hess, params.lambda, params.min_child_weight};
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = logistic(margin[i]);
      grad[i] = p - targets[i];
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    detail::TreeGrower grower(x.values(), order, rows, crit, {params.max_depth, 0, nullptr});
    auto tree = grower.grow();
    for (std::size_t i = 0; i < n; ++i) margin[i] += params.learning_rate * tree.predict(x.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

RfModel train_rf(const FeatureMatrix& x, const LabelVector& y, const RfParams& params) {
  const auto targets = binary_targets(x, y, params.allow_constant);
  if (params.min_samples_leaf < 1) throw Error(ErrorKind::Parameter, "min_samples_leaf must be >= 1");
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();

  RfModel model;
  model.schema = x.schema();
  model.params = params;
  model.mtry = params.mtry != 0 ? std::min(params.mtry, p)
                                : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
  model.trees.resize(params.n_trees);
  model.tree_seeds.resize(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) model.tree_seeds[t] = derive_seed(params.seed, t);

  const auto order = detail::presort(x.values());
  parallel_for(params.n_trees, params.workers, [&](std::size_t t) {
    std::mt19937_64 rng(model.tree_seeds[t]);
    std::vector<std::uint32_t> rows(n);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::uint32_t> draw(0, static_cast<std::uint32_t>(n - 1));
      for (auto& r : rows) r = draw(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0u);
    }
    std::vector<int> labels(n);
    for (std::size_t s = 0; s < n; ++s) labels[s] = targets[rows[s]];
    detail::GiniCriterion crit{labels, static_cast<double>(params.min_samples_leaf)};
    const bool subsample = model.mtry < p;
    detail::TreeGrower grower(x.values(), order, rows, crit,
                              {params.max_depth, subsample ? model.mtry : 0, subsample ? &rng : nullptr});
    model.trees[t] = grower.grow();
  });
  return model;
}

KnnModel train_knn(const FeatureMatrix& x, const LabelVector& y, std::size_t k) {
  if (k < 1 || k > x.rows()) {
    throw Error(ErrorKind::Parameter, "k=" + std::to_string(k) + " must be in [1, " +
                                          std::to_string(x.rows()) + "]");
  }
  KnnModel model;
  model.schema = x.schema();
  model.train = x.values();
  model.labels = binary_targets(x, y, true);
  model.k = k;
  return model;
}

double predict_proba(const TrainedModel& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.predict_proba(x); }, model);
}

int predict_class(const TrainedModel& model, std::span<const double> x) {
  if (const auto* knn = std::get_if<KnnModel>(&model)) return knn->predict_class(x);
  return predict_proba(model, x) > 0.5 ? 1 : 0;
}

namespace {

void check_schema(const TrainedModel& model, const FeatureMatrix& x) {
  const auto& s = schema_of(model);
  if (!s || !x.schema() || !s->same_names(*x.schema())) {
    throw Error(ErrorKind::Schema, "input schema does not match the model's training schema");
  }
}

}  // namespace

std::vector<double> predict_proba(const TrainedModel& model, const FeatureMatrix& x) {
  check_schema(model, x);
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict_proba(model, x.row(i));
  return out;
}

std::vector<int> predict_class(const TrainedModel& model, const FeatureMatrix& x) {
  check_schema(model, x);
  std::vector<int> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict_class(model, x.row(i));
  return out;
}

double explained_output(const TrainedModel& model, std::span<const double> x) {
  if (const auto* gbt = std::get_if<GbtModel>(&model)) return gbt->margin(x);
  return predict_proba(model, x);
}

double output_threshold(const TrainedModel& model) {
  return kind_of(model) == ModelKind::Gbt ? 0.0 : 0.5;
}

Metrics metrics_from(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw Error(ErrorKind::Parameter, "length mismatch");
  Metrics m;
  m.n = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 1) (predicted[i] == 1 ? m.tp : m.fn)++;
    else (predicted[i] == 1 ? m.fp : m.tn)++;
  }
  auto ratio = [](double a, double b) { return b > 0.0 ? a / b : 0.0; };
  m.accuracy = ratio(static_cast<double>(m.tp + m.tn), static_cast<double>(m.n));
  m.precision = ratio(static_cast<double>(m.tp), static_cast<double>(m.tp + m.fp));
  m.recall = ratio(static_cast<double>(m.tp), static_cast<double>(m.tp + m.fn));
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

Metrics evaluate(const TrainedModel& model, const FeatureMatrix& x, const LabelVector& y) {
  const auto pred = predict_class(model, x);
  return metrics_from(y.values, pred);
}

std::string_view to_string(ImportanceMethod method) {
  switch (method) {
    case ImportanceMethod::Gain: return "gain";
    case ImportanceMethod::Permutation: return "permutation";
    case ImportanceMethod::ShapGlobal: return "shap_global";
    case ImportanceMethod::LimeAggregate: return "lime_aggregate";
  }
  return "gain";
}

ImportanceVector importance_gain(const TrainedModel& model) {
  const std::vector<DecisionTree>* trees = nullptr;
  if (const auto* g = std::get_if<GbtModel>(&model)) trees = &g->trees;
  else if (const auto* r = std::get_if<RfModel>(&model)) trees = &r->trees;
  else throw Error(ErrorKind::MethodMismatch, "gain importance requires a tree ensemble");

  ImportanceVector out;
  out.schema = schema_of(model);
  out.method = ImportanceMethod::Gain;
  out.source = std::string(to_string(kind_of(model)));
  out.scores.assign(out.schema->width(), 0.0);
  for (const auto& t : *trees) {
    for (const auto& n : t.nodes) {
      if (!n.is_leaf()) out.scores[static_cast<std::size_t>(n.feature)] += n.gain;
    }
  }
  const double total = std::accumulate(out.scores.begin(), out.scores.end(), 0.0);
  if (total > 0.0) {
    for (auto& s : out.scores) s /= total;
  }
  return out;
}

namespace {

double permuted_accuracy_generic(const TrainedModel& model, const Matrix& base, std::size_t col,
                                 std::span<const std::size_t> perm, std::span<const int> truth) {
  std::vector<double> row(base.cols());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < base.rows(); ++i) {
    auto src = base.row(i);
    std::copy(src.begin(), src.end(), row.begin());
    row[col] = base(perm[i], col);
    correct += predict_class(model, row) == truth[i];
  }
  return static_cast<double>(correct) / static_cast<double>(base.rows());
}

// KNN shortcut: permuting one column changes one term of every squared distance.
class KnnPermutationScorer {
 public:
  KnnPermutationScorer(const KnnModel& model, const Matrix& queries)
      : model_(model), queries_(queries), dist_(queries.rows(), model.train.rows()) {
    for (std::size_t i = 0; i < queries.rows(); ++i) {
      for (std::size_t j = 0; j < model.train.rows(); ++j) {
        dist_(i, j) = sq_distance(queries.row(i), model.train.row(j));
      }
    }
  }

  double accuracy(std::size_t col, std::span<const std::size_t> perm, std::span<const int> truth) const {
    const std::size_t n_train = model_.train.rows();
    std::vector<std::pair<double, std::size_t>> d(n_train);
    std::vector<std::size_t> nb;
    std::vector<double> nd;
    std::size_t correct = 0;
    const auto k = std::min(model_.k, n_train);
    for (std::size_t i = 0; i < queries_.rows(); ++i) {
      const double old_v = queries_(i, col);
      const double new_v = queries_(perm[i], col);
      for (std::size_t j = 0; j < n_train; ++j) {
        const double t = model_.train(j, col);
        const double v = perm[i] == i ? dist_(i, j)
                                       : dist_(i, j) - (old_v - t) * (old_v - t) + (new_v - t) * (new_v - t);
        d[j] = {v, j};
      }
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
      nb.resize(k);
      nd.resize(k);
      for (std::size_t j = 0; j < k; ++j) {
        nb[j] = d[j].second;
        nd[j] = std::max(d[j].first, 0.0);
      }
      correct += knn_vote(model_, nb, nd) == truth[i];
    }
    return static_cast<double>(correct) / static_cast<double>(queries_.rows());
  }

 private:
  const KnnModel& model_;
  const Matrix& queries_;
  Matrix dist_;
};

}  // namespace

ImportanceVector importance_permutation(const TrainedModel& model, const FeatureMatrix& x,
                                        const LabelVector& y, std::size_t repeats,
                                        std::uint64_t seed, std::size_t workers) {
  check_schema(model, x);
  if (repeats < 1) throw Error(ErrorKind::Parameter, "repeats must be >= 1");
  if (x.rows() != y.size()) throw Error(ErrorKind::Parameter, "matrix/label length mismatch");
  ImportanceVector out;
  out.schema = x.schema();
  out.method = ImportanceMethod::Permutation;
  out.source = std::string(to_string(kind_of(model)));
  out.scores.assign(x.cols(), 0.0);
  if (x.rows() == 0) return out;

  const double baseline = evaluate(model, x, y).accuracy;
  std::optional<KnnPermutationScorer> knn;
  if (const auto* m = std::get_if<KnnModel>(&model)) knn.emplace(*m, x.values());

  parallel_for(x.cols(), workers, [&](std::size_t col) {
    double sum = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
      std::vector<std::size_t> perm(x.rows());
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(derive_seed(derive_seed(seed, col), r));
      std::shuffle(perm.begin(), perm.end(), rng);
      sum += knn ? knn->accuracy(col, perm, y.values)
                 : permuted_accuracy_generic(model, x.values(), col, perm, y.values);
    }
    out.scores[col] = baseline - sum / static_cast<double>(repeats);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Model documents
//
//   explia-model <version>
//   kind <gbt|rf|knn>
//   raw_width <n>
//   features <p>
//   feature <i> <name>            (p lines)
//   param <key> <value>           (kind-specific)
//   tree <t> <node count>         (tree ensembles)
//   node <id> <feature> <threshold> <left> <right> <value> <cover> <gain>
//   rows <n>                      (knn)
//   row <label> <v_0> ... <v_p-1>
//   end
// ---------------------------------------------------------------------------

namespace {

void write_trees(std::ostringstream& out, const std::vector<DecisionTree>& trees) {
  for (std::size_t t = 0; t < trees.size(); ++t) {
    out << "tree " << t << ' ' << trees[t].nodes.size() << '\n';
    for (std::size_t i = 0; i < trees[t].nodes.size(); ++i) {
      const auto& n = trees[t].nodes[i];
      out << "node " << i << ' ' << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left
          << ' ' << n.right << ' ' << format_double(n.value) << ' ' << format_double(n.cover) << ' '
          << format_double(n.gain) << '\n';
    }
  }
}

class DocReader {
 public:
  explicit DocReader(std::string_view doc) : in_(std::string(doc)) {}

  std::istringstream next(std::string_view expected_tag) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string tag;
      ls >> tag;
      if (tag != expected_tag) fail("expected '" + std::string(expected_tag) + "', found '" + tag + "'");
      return ls;
    }
    fail("document ends before '" + std::string(expected_tag) + "'");
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorKind::CorruptDocument, "line " + std::to_string(line_no_) + ": " + why);
  }

  template <class T>
  T read(std::istringstream& ls) const {
    if constexpr (std::is_same_v<T, double>) {
      std::string tok;
      if (!(ls >> tok)) fail("missing value");
      const double v = parse_double(tok);
      if (std::isnan(v) && tok != "nan") fail("bad number '" + tok + "'");
      return v;
    } else {
      T v{};
      if (!(ls >> v)) fail("missing value");
      return v;
    }
  }

  double param(std::string_view key) {
    auto ls = next("param");
    std::string k;
    ls >> k;
    if (k != key) fail("expected param '" + std::string(key) + "'");
    return read<double>(ls);
  }

 private:
  std::istringstream in_;
  std::size_t line_no_ = 0;
};

std::vector<DecisionTree> read_trees(DocReader& r, std::size_t count, std::size_t n_features) {
  std::vector<DecisionTree> trees(count);
  for (std::size_t t = 0; t < count; ++t) {
    auto ls = r.next("tree");
    if (r.read<std::size_t>(ls) != t) r.fail("tree out of order");
    const auto n_nodes = r.read<std::size_t>(ls);
    if (n_nodes == 0 || n_nodes > (1u << 26)) r.fail("implausible node count");
    trees[t].nodes.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
      auto ns = r.next("node");
      if (r.read<std::size_t>(ns) != i) r.fail("node out of order");
      auto& n = trees[t].nodes[i];
      n.feature = r.read<int>(ns);
      n.threshold = r.read<double>(ns);
      n.left = r.read<int>(ns);
      n.right = r.read<int>(ns);
      n.value = r.read<double>(ns);
      n.cover = r.read<double>(ns);
      n.gain = r.read<double>(ns);
      if (n.feature < 0) n.feature = -1;
    }
    trees[t].validate(n_features);
  }
  return trees;
}

}  // namespace

std::string serialize(const TrainedModel& model) {
  std::ostringstream out;
  const auto& schema = *schema_of(model);
  out << "explia-model " << kModelFormatVersion << '\n';
  out << "kind " << to_string(kind_of(model)) << '\n';
  out << "raw_width " << schema.raw_width << '\n';
  out << "features " << schema.width() << '\n';
  for (std::size_t i = 0; i < schema.width(); ++i) out << "feature " << i << ' ' << schema.names[i] << '\n';

  if (const auto* g = std::get_if<GbtModel>(&model)) {
    out << "param learning_rate " << format_double(g->learning_rate) << '\n';
    out << "param base_score " << format_double(g->base_score) << '\n';
    out << "param max_depth " << g->params.max_depth << '\n';
    out << "param lambda " << format_double(g->params.lambda) << '\n';
    out << "param min_child_weight " << format_double(g->params.min_child_weight) << '\n';
    out << "param seed " << g->params.seed << '\n';
    out << "param n_trees " << g->trees.size() << '\n';
    write_trees(out, g->trees);
  } else if (const auto* rf = std::get_if<RfModel>(&model)) {
    out << "param mtry " << rf->mtry << '\n';
    out << "param min_samples_leaf " << rf->params.min_samples_leaf << '\n';
    out << "param bootstrap " << (rf->params.bootstrap ? 1 : 0) << '\n';
    out << "param seed " << rf->params.seed << '\n';
    out << "param n_trees " << rf->trees.size() << '\n';
    for (std::size_t t = 0; t < rf->tree_seeds.size(); ++t) {
      out << "tree_seed " << t << ' ' << rf->tree_seeds[t] << '\n';
    }
    write_trees(out, rf->trees);
  } else {
    const auto& k = std::get<KnnModel>(model);
    out << "param k " << k.k << '\n';
    out << "rows " << k.train.rows() << '\n';
    for (std::size_t i = 0; i < k.train.rows(); ++i) {
      out << "row " << k.labels[i];
      for (double v : k.train.row(i)) out << ' ' << format_double(v);
      out << '\n';
    }
  }
  out << "end\n";
  return out.str();
}

TrainedModel deserialize(std::string_view document) {
  DocReader r(document);
  {
    auto ls = r.next("explia-model");
    const int version = r.read<int>(ls);
    if (version != kModelFormatVersion) {
      throw Error(ErrorKind::VersionMismatch, "model document version " + std::to_string(version) +
                                                  ", expected " + std::to_string(kModelFormatVersion));
    }
  }
  std::string kind_text;
  {
    auto ls = r.next("kind");
    ls >> kind_text;
  }
  ModelKind kind;
  try {
    kind = parse_model_kind(kind_text);
  } catch (const Error&) {
    r.fail("unknown model kind '" + kind_text + "'");
  }
  std::size_t raw_width = 0;
  {
    auto ls = r.next("raw_width");
    raw_width = r.read<std::size_t>(ls);
  }
  std::size_t p = 0;
  {
    auto ls = r.next("features");
    p = r.read<std::size_t>(ls);
  }
  std::vector<std::string> names(p);
  for (std::size_t i = 0; i < p; ++i) {
    auto ls = r.next("feature");
    if (r.read<std::size_t>(ls) != i) r.fail("feature out of order");
    std::string name;
    std::getline(ls >> std::ws, name);
    names[i] = name;
  }
  auto schema = dataset::make_schema(std::move(names), raw_width);

  TrainedModel result;
  if (kind == ModelKind::Gbt) {
    GbtModel g;
    g.schema = schema;
    g.learning_rate = r.param("learning_rate");
    g.base_score = r.param("base_score");
    g.params.max_depth = static_cast<std::size_t>(r.param("max_depth"));
    g.params.lambda = r.param("lambda");
    g.params.min_child_weight = r.param("min_child_weight");
    {
      auto ls = r.next("param");
      std::string key;
      ls >> key;
      if (key != "seed") r.fail("expected param 'seed'");
      g.params.seed = r.read<std::uint64_t>(ls);
    }
    g.params.learning_rate = g.learning_rate;
    const auto n_trees = static_cast<std::size_t>(r.param("n_trees"));
    g.params.n_trees = n_trees;
    g.trees = read_trees(r, n_trees, p);
    result = std::move(g);
  } else if (kind == ModelKind::Rf) {
    RfModel rf;
    rf.schema = schema;
    rf.mtry = static_cast<std::size_t>(r.param("mtry"));
    rf.params.mtry = rf.mtry;
    rf.params.min_samples_leaf = static_cast<std::size_t>(r.param("min_samples_leaf"));
    rf.params.bootstrap = r.param("bootstrap") != 0.0;
    {
      auto ls = r.next("param");
      std::string key;
      ls >> key;
      if (key != "seed") r.fail("expected param 'seed'");
      rf.params.seed = r.read<std::uint64_t>(ls);
    }
    const auto n_trees = static_cast<std::size_t>(r.param("n_trees"));
    rf.params.n_trees = n_trees;
    rf.tree_seeds.resize(n_trees);
    for (std::size_t t = 0; t < n_trees; ++t) {
      auto ls = r.next("tree_seed");
      if (r.read<std::size_t>(ls) != t) r.fail("tree seed out of order");
      rf.tree_seeds[t] = r.read<std::uint64_t>(ls);
    }
    rf.trees = read_trees(r, n_trees, p);
    result = std::move(rf);
  } else {
    KnnModel k;
    k.schema = schema;
    k.k = static_cast<std::size_t>(r.param("k"));
    std::size_t n = 0;
    {
      auto ls = r.next("rows");
      n = r.read<std::size_t>(ls);
    }
    k.train = Matrix(n, p);
    k.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto ls = r.next("row");
      k.labels[i] = r.read<int>(ls);
      if (k.labels[i] != 0 && k.labels[i] != 1) r.fail("label outside {0,1}");
      for (std::size_t c = 0; c < p; ++c) k.train(i, c) = r.read<double>(ls);
    }
    if (k.k < 1 || k.k > n) r.fail("k out of range");
    result = std::move(k);
  }
  r.next("end");
  return result;
}

}  // namespace explia::models
