#include "explia/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <sstream>

#include "explia/consistency.hpp"
#include "explia/explain.hpp"

namespace explia::pipeline {

namespace fs = std::filesystem;
using dataset::FeatureMatrix;
using dataset::LabelLevel;
using dataset::LabelTaxonomy;
using dataset::LabelVector;
using json = nlohmann::ordered_json;
using models::ModelKind;
using models::TrainedModel;

namespace {

const std::string kTargetPrefix = "balance.target.";

Error config_error(const std::string& message) { return Error(ErrorKind::Config, message); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void log(const std::string& line) { std::clog << "[explia] " << line << '\n'; }

}  // namespace

const std::map<std::string, std::string>& PipelineConfig::default_values() {
  static const std::map<std::string, std::string> defaults{
      {"seed", "2023"},
      {"out", "explia-out"},
      {"workers", "1"},
      {"mode", "faithful"},
      {"data.dir", ""},
      {"data.files", ""},
      {"data.shards", "0"},
      {"balance.plan", "ciciot"},
      {"smote.k", ""},
      {"split.ratio", "0.8"},
      {"split.stratify", "true"},
      {"models", "gbt,rf,knn"},
      {"gbt.n_trees", "100"},
      {"gbt.max_depth", "6"},
      {"gbt.learning_rate", "0.3"},
      {"gbt.lambda", "1"},
      {"gbt.min_child_weight", "1"},
      {"rf.n_trees", "100"},
      {"rf.mtry", "0"},
      {"rf.min_samples_leaf", "1"},
      {"rf.max_depth", "0"},
      {"knn.k", "5"},
      {"importance.permutation_repeats", "5"},
      {"shap.background", "100"},
      {"shap.eval", "200"},
      {"shap.permutations", "200"},
      {"shap.floor", "0.001"},
      {"lime.samples", "5000"},
      {"lime.kernel_width", "0"},
      {"lime.ridge", "1"},
      {"lime.features", "10"},
      {"explain.model", "selected"},
      {"explain.samples", "0,1"},
      {"agree.samples", "100"},
      {"agree.k", "5"},
      {"rfe.model", "selected"},
      {"rfe.min_features", "5"},
      {"rfe.tolerance", "0"},
      {"rfe.batch_drop_zero", "true"},
      {"rfe.importance", "gain"},
      {"rfe.scoring", "validation"},
      {"rfe.validation_fraction", "0.2"},
      {"rfe.xai_seed", "true"},
      {"rfe.seed_top", "20"},
  };
  return defaults;
}

PipelineConfig::PipelineConfig() : values_(default_values()) {}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  if (!default_values().contains(key) && !key.starts_with(kTargetPrefix)) {
    throw config_error("unknown config key '" + key + "'");
  }
  values_[key] = value;
}

const std::string& PipelineConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw config_error("unknown config key '" + key + "'");
  return it->second;
}

PipelineConfig PipelineConfig::parse(std::string_view text) {
  PipelineConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw config_error("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(body.substr(0, eq));
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw config_error("line " + std::to_string(line_no) + ": key '" + key + "' already set on line " +
                         std::to_string(it->second));
    }
    try {
      config.set(key, trim(body.substr(eq + 1)));
    } catch (const Error& e) {
      throw config_error("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::string text;
  try {
    text = dataset::read_file(path);
  } catch (const Error&) {
    throw config_error("cannot read config file " + path.string());
  }
  return parse(text);
}

std::uint64_t PipelineConfig::seed() const {
  const auto& v = get("seed");
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw config_error("seed must be a non-negative integer");
  return out;
}

std::size_t PipelineConfig::count(const std::string& key) const {
  const auto& v = get(key);
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw config_error(key + " must be a non-negative integer, got '" + v + "'");
  }
  return out;
}

double PipelineConfig::number(const std::string& key) const {
  const double v = parse_double(get(key));
  if (!std::isfinite(v)) throw config_error(key + " must be a finite number, got '" + get(key) + "'");
  return v;
}

bool PipelineConfig::flag(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error(key + " must be true or false, got '" + v + "'");
}

std::vector<std::string> PipelineConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

fs::path PipelineConfig::out_dir() const {
  if (get("out").empty()) throw config_error("out must not be empty");
  return get("out");
}

fs::path PipelineConfig::data_dir() const {
  if (!get("data.dir").empty()) return get("data.dir");
  if (const char* env = std::getenv(kDataDirEnv); env != nullptr && *env != '\0') return env;
  throw config_error(std::string("no data directory: set data.dir or ") + kDataDirEnv);
}

bool PipelineConfig::faithful() const {
  const auto& m = get("mode");
  if (m == "faithful") return true;
  if (m == "leakage_safe") return false;
  throw config_error("mode must be faithful or leakage_safe, got '" + m + "'");
}

balance::BalancePlan PipelineConfig::plan(const LabelTaxonomy& taxonomy) const {
  balance::BalancePlan plan;
  const auto& name = get("balance.plan");
  if (name == "ciciot") plan = balance::BalancePlan::ciciot_default(taxonomy);
  else if (name != "none") throw config_error("balance.plan must be ciciot or none, got '" + name + "'");
  for (const auto& [key, value] : values_) {
    if (!key.starts_with(kTargetPrefix)) continue;
    const auto group = key.substr(kTargetPrefix.size());
    if (!taxonomy.is_class(group)) throw config_error("'" + key + "': '" + group + "' is not a class");
    plan.target_count[group] = count(key);
  }
  return plan;
}

balance::SmoteParams PipelineConfig::smote() const {
  balance::SmoteParams params;
  if (!get("smote.k").empty()) params.k = count("smote.k");
  params.seed = derive_seed(seed(), "smote");
  return params;
}

models::GbtParams PipelineConfig::gbt() const {
  models::GbtParams p;
  p.n_trees = count("gbt.n_trees");
  p.max_depth = count("gbt.max_depth");
  p.learning_rate = number("gbt.learning_rate");
  p.lambda = number("gbt.lambda");
  p.min_child_weight = number("gbt.min_child_weight");
  p.seed = derive_seed(seed(), "gbt");
  return p;
}

models::RfParams PipelineConfig::rf() const {
  models::RfParams p;
  p.n_trees = count("rf.n_trees");
  p.mtry = count("rf.mtry");
  p.min_samples_leaf = count("rf.min_samples_leaf");
  p.max_depth = count("rf.max_depth");
  p.seed = derive_seed(seed(), "rf");
  p.workers = count("workers");
  return p;
}

std::size_t PipelineConfig::knn_k() const { return count("knn.k"); }

std::vector<ModelKind> PipelineConfig::model_kinds() const {
  std::vector<ModelKind> kinds;
  for (const auto& name : list("models")) {
    ModelKind k;
    try {
      k = models::parse_model_kind(name);
    } catch (const Error&) {
      throw config_error("models: unknown model '" + name + "'");
    }
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  }
  if (kinds.empty()) throw config_error("models must name at least one of gbt, rf, knn");
  std::sort(kinds.begin(), kinds.end());
  return kinds;
}

rfe::RfeConfig PipelineConfig::rfe() const {
  rfe::RfeConfig c;
  c.min_features = count("rfe.min_features");
  c.tolerance = number("rfe.tolerance");
  c.batch_drop_zero = flag("rfe.batch_drop_zero");
  try {
    c.importance_source = rfe::parse_importance_source(get("rfe.importance"));
  } catch (const Error& e) {
    throw config_error(std::string("rfe.importance: ") + e.what());
  }
  c.permutation_repeats = count("importance.permutation_repeats");
  c.shap_background = count("shap.background");
  c.shap_eval = count("shap.eval");
  c.shap.n_permutations = count("shap.permutations");
  c.shap.seed = derive_seed(seed(), "rfe_shap");
  c.validation_fraction = number("rfe.validation_fraction");
  c.seed = derive_seed(seed(), "rfe");
  c.workers = count("workers");
  return c;
}

json PipelineConfig::echo() const {
  json j = json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

void PipelineConfig::validate() const {
  seed();
  out_dir();
  faithful();
  if (count("workers") == 0) throw config_error("workers must be at least 1");
  count("data.shards");
  plan(LabelTaxonomy::ciciot2023());
  smote();
  const double ratio = number("split.ratio");
  if (!(ratio > 0.0 && ratio < 1.0)) throw config_error("split.ratio must be in (0, 1)");
  flag("split.stratify");
  model_kinds();
  gbt();
  rf();
  if (knn_k() == 0) throw config_error("knn.k must be at least 1");
  count("importance.permutation_repeats");
  if (count("shap.background") == 0) throw config_error("shap.background must be at least 1");
  count("shap.eval");
  if (count("shap.permutations") == 0) throw config_error("shap.permutations must be at least 1");
  number("shap.floor");
  count("lime.samples");
  if (number("lime.kernel_width") < 0.0) throw config_error("lime.kernel_width must be >= 0 (0 = automatic)");
  number("lime.ridge");
  count("lime.features");
  for (const auto& key : {"explain.model", "rfe.model"}) {
    if (get(key) != "selected") {
      try {
        models::parse_model_kind(get(key));
      } catch (const Error&) {
        throw config_error(std::string(key) + " must be selected, gbt, rf or knn");
      }
    }
  }
  for (const auto& s : list("explain.samples")) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw config_error("explain.samples must list test-row indices, got '" + s + "'");
    }
  }
  count("agree.samples");
  count("agree.k");
  rfe();
  const auto& scoring = get("rfe.scoring");
  if (scoring != "validation" && scoring != "test") throw config_error("rfe.scoring must be validation or test");
  const double vf = number("rfe.validation_fraction");
  if (!(vf > 0.0 && vf < 1.0)) throw config_error("rfe.validation_fraction must be in (0, 1)");
  flag("rfe.xai_seed");
  count("rfe.seed_top");
}

namespace {

const LabelTaxonomy& taxonomy() { return LabelTaxonomy::ciciot2023(); }

struct Table {
  FeatureMatrix x;
  std::vector<std::string> labels;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_json(const fs::path& path, const json& j) { dataset::write_file(path, dump(j)); }

json read_json(const fs::path& path) {
  try {
    return json::parse(dataset::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::CorruptDocument, path.string() + ": " + e.what());
  }
}

fs::path stage_dir(const PipelineConfig& c, const std::string& stage) { return c.out_dir() / stage; }

fs::path require_file(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::Io, "missing " + path.string() + " (run the " + producer + " stage first)");
  }
  return path;
}

dataset::SchemaPtr load_schema(const PipelineConfig& c, std::optional<dataset::ScalerStats>* scaler = nullptr) {
  const auto doc = dataset::KeyValueDoc::load(require_file(stage_dir(c, "ingest") / "data.meta", "ingest"));
  auto schema = dataset::read_schema(doc);
  if (scaler != nullptr) *scaler = dataset::read_scaler(doc, schema);
  return schema;
}

Table load_table(const PipelineConfig& c, const fs::path& csv, const std::string& producer) {
  std::optional<dataset::ScalerStats> scaler;
  const auto schema = load_schema(c, &scaler);
  auto raw = dataset::load_csv(require_file(csv, producer), schema, taxonomy());
  return {FeatureMatrix(schema, std::move(raw.values), scaler), std::move(raw.labels)};
}

LabelVector class_labels(const std::vector<std::string>& labels) {
  LabelVector out;
  out.level = LabelLevel::Class;
  out.names = taxonomy().level_names(LabelLevel::Class);
  out.values.reserve(labels.size());
  for (const auto& l : labels) {
    if (!taxonomy().contains(l) && !taxonomy().is_class(l)) throw Error(ErrorKind::UnknownLabel, "'" + l + "'");
    const auto& cls = taxonomy().class_of(l);
    out.values.push_back(static_cast<int>(std::find(out.names.begin(), out.names.end(), cls) - out.names.begin()));
  }
  return out;
}

std::vector<std::string> names_of(const LabelVector& y) {
  std::vector<std::string> out;
  out.reserve(y.size());
  for (int v : y.values) out.push_back(y.names.at(static_cast<std::size_t>(v)));
  return out;
}

json counts_json(const LabelVector& y) {
  json j = json::object();
  const auto counts = y.counts();
  for (std::size_t i = 0; i < y.names.size(); ++i) j[y.names[i]] = counts[i];
  return j;
}

fs::path model_path(const PipelineConfig& c, ModelKind kind) {
  return stage_dir(c, "train") / ("model_" + std::string(models::to_string(kind)) + ".txt");
}

TrainedModel load_model(const PipelineConfig& c, ModelKind kind) {
  return models::deserialize(dataset::read_file(require_file(model_path(c, kind), "train")));
}

ModelKind resolve_model(const PipelineConfig& c, const std::string& key) {
  const auto& name = c.get(key);
  if (name != "selected") return models::parse_model_kind(name);
  const auto metrics = read_json(require_file(stage_dir(c, "evaluate") / "metrics.json", "evaluate"));
  return models::parse_model_kind(metrics.at("selected").get<std::string>());
}

TrainedModel train_kind(const PipelineConfig& c, ModelKind kind, const FeatureMatrix& x, const LabelVector& y) {
  switch (kind) {
    case ModelKind::Gbt: return models::train_gbt(x, y, c.gbt());
    case ModelKind::Rf: return models::train_rf(x, y, c.rf());
    case ModelKind::Knn: return models::train_knn(x, y, c.knn_k());
  }
  throw Error(ErrorKind::Parameter, "unknown model kind");
}

json metrics_json(const models::Metrics& m) {
  json j;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["tp"] = m.tp;
  j["tn"] = m.tn;
  j["fp"] = m.fp;
  j["fn"] = m.fn;
  j["n"] = m.n;
  return j;
}

std::string importance_csv(const models::ImportanceVector& imp) {
  std::string out = "rank,feature,score\n";
  const auto ranking = consistency::rank_features(imp.scores);
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    out += std::to_string(r + 1) + "," + imp.schema->names[ranking[r]] + "," + format_double(imp.scores[ranking[r]]) +
           "\n";
  }
  return out;
}

// Reads a `...,feature,score`-style CSV back into schema order.
consistency::RankingSource read_scores(const fs::path& path, const dataset::SchemaPtr& schema, const std::string& name,
                                       const std::string& feature_col, const std::string& score_col) {
  std::istringstream in(dataset::read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(trim(cell));
  }
  const auto fcol = std::find(header.begin(), header.end(), feature_col) - header.begin();
  const auto scol = std::find(header.begin(), header.end(), score_col) - header.begin();
  if (static_cast<std::size_t>(fcol) == header.size() || static_cast<std::size_t>(scol) == header.size()) {
    throw Error(ErrorKind::CorruptDocument, path.string() + ": missing '" + feature_col + "' or '" + score_col + "'");
  }
  consistency::RankingSource src{name, schema, std::vector<double>(schema->width(), 0.0)};
  std::vector<bool> seen(schema->width(), false);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw Error(ErrorKind::CorruptDocument, path.string() + ": ragged row");
    const auto idx = schema->index_of(cells[static_cast<std::size_t>(fcol)]);
    if (!idx) throw Error(ErrorKind::Schema, path.string() + ": unknown feature '" + cells[static_cast<std::size_t>(fcol)] + "'");
    src.scores[*idx] = parse_double(cells[static_cast<std::size_t>(scol)]);
    seen[*idx] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw Error(ErrorKind::Schema, path.string() + ": does not cover every feature");
  }
  return src;
}

fs::path importance_path(const PipelineConfig& c, ModelKind kind, models::ImportanceMethod method) {
  return stage_dir(c, "evaluate") /
         ("importance_" + std::string(models::to_string(kind)) + "_" + std::string(models::to_string(method)) + ".csv");
}

// Gain for tree models, permutation for KNN.
consistency::RankingSource model_source(const PipelineConfig& c, ModelKind kind, const dataset::SchemaPtr& schema) {
  const auto method = kind == ModelKind::Knn ? models::ImportanceMethod::Permutation : models::ImportanceMethod::Gain;
  return read_scores(require_file(importance_path(c, kind, method), "evaluate"), schema,
                     std::string(models::to_string(kind)) + "_" + std::string(models::to_string(method)), "feature",
                     "score");
}

FeatureMatrix background_rows(const PipelineConfig& c, const FeatureMatrix& train) {
  const auto rows = balance::undersample(train.rows(), std::min(c.count("shap.background"), train.rows()),
                                         derive_seed(c.seed(), "background"));
  return train.select_rows(rows);
}

explain::LimeParams lime_params(const PipelineConfig& c, std::size_t p) {
  explain::LimeParams lp;
  lp.n_samples = c.count("lime.samples");
  lp.kernel_width = c.number("lime.kernel_width");
  lp.ridge = c.number("lime.ridge");
  lp.num_features = std::min(c.count("lime.features"), p);
  lp.seed = derive_seed(c.seed(), "lime");
  return lp;
}

explain::ShapConfig shap_config(const PipelineConfig& c) {
  explain::ShapConfig sc;
  sc.n_permutations = c.count("shap.permutations");
  sc.seed = derive_seed(c.seed(), "shap");
  sc.workers = c.count("workers");
  return sc;
}

std::string direction_of(double phi) { return phi > 0.0 ? "attack" : phi < 0.0 ? "benign" : "none"; }

}  // namespace

StageResult cmd_ingest(const PipelineConfig& c) {
  const auto dir = c.data_dir();
  std::vector<fs::path> files;
  const auto listed = c.list("data.files");
  if (!listed.empty()) {
    for (const auto& f : listed) files.push_back(fs::path(f).is_absolute() ? fs::path(f) : dir / f);
  } else {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "data directory " + dir.string() + " does not exist");
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
  }
  files = dataset::choose_files(std::move(files), c.count("data.shards"), derive_seed(c.seed(), "shards"));
  if (files.empty()) throw Error(ErrorKind::EmptyInput, "no CSV files in " + dir.string());

  const auto raw_schema = dataset::ciciot_raw_schema();
  std::vector<dataset::RawTable> tables;
  json file_names = json::array();
  for (const auto& f : files) {
    tables.push_back(dataset::load_csv(f, raw_schema, taxonomy()));
    file_names.push_back(f.filename().string());
  }
  const auto all = dataset::concat(tables);
  const auto cleaned = dataset::clean(all);
  const auto encoded = dataset::encode_labels(cleaned.table, LabelLevel::Subcategory, taxonomy());
  const auto stats = dataset::fit_standardizer(encoded.matrix);
  const auto standardized = dataset::standardize(encoded.matrix, stats);
  const auto dropped = dataset::drop_zero_variance(standardized, stats);
  const auto& x = dropped.matrix;

  json dropped_cols = json::array();
  for (std::size_t j = 0; j < raw_schema->width(); ++j) {
    if (std::find(dropped.kept.begin(), dropped.kept.end(), j) == dropped.kept.end()) {
      dropped_cols.push_back(raw_schema->names[j]);
    }
  }

  const auto out = stage_dir(c, "ingest");
  dataset::KeyValueDoc meta;
  dataset::write_schema(meta, *x.schema());
  dataset::write_scaler(meta, *x.scaler());
  meta.save(out / "data.meta");
  dataset::write_file(out / "clean.csv", dataset::to_csv(x, cleaned.table.labels));

  json s;
  s["files"] = file_names;
  s["rows_read"] = all.rows();
  s["dropped_nonfinite"] = cleaned.dropped_nonfinite;
  s["dropped_duplicate"] = cleaned.dropped_duplicate;
  s["rows"] = x.rows();
  s["raw_columns"] = raw_schema->width();
  s["columns"] = x.cols();
  s["dropped_columns"] = dropped_cols;
  s["class_counts"] = counts_json(class_labels(cleaned.table.labels));
  write_json(out / "ingest.json", s);
  log("ingest: " + std::to_string(x.rows()) + " rows, " + std::to_string(raw_schema->width()) + " -> " +
      std::to_string(x.cols()) + " columns");
  return {"ingest", s};
}

StageResult cmd_balance(const PipelineConfig& c) {
  const auto data = load_table(c, stage_dir(c, "ingest") / "clean.csv", "ingest");
  const auto y = class_labels(data.labels);
  const auto plan = c.plan(taxonomy());
  const auto smote = c.smote();
  const double ratio = c.number("split.ratio");
  const bool stratify = c.flag("split.stratify");
  const auto split_seed = derive_seed(c.seed(), "split");

  balance::BalanceResult balanced;
  dataset::DatasetSplit parts;
  if (c.faithful()) {
    balanced = balance::apply_plan(data.x, y, plan, smote);
    parts = dataset::split(balanced.matrix, balanced.labels, ratio, split_seed, stratify);
  } else {
    const auto raw = dataset::split(data.x, y, ratio, split_seed, stratify);
    balanced = balance::apply_plan(raw.train_x, raw.train_y, plan, smote);
    parts.train_x = balanced.matrix;
    parts.train_y = balanced.labels;
    parts.test_x = raw.test_x;
    parts.test_y = raw.test_y;
    parts.train_rows.resize(balanced.matrix.rows());
    std::iota(parts.train_rows.begin(), parts.train_rows.end(), std::size_t{0});
    parts.test_rows = raw.test_rows;
  }

  const auto out = stage_dir(c, "balance");
  std::vector<std::string> synth, source;
  for (std::size_t i = 0; i < balanced.synthetic.size(); ++i) {
    synth.push_back(balanced.synthetic[i] ? "1" : "0");
    source.push_back(std::to_string(balanced.source_row[i]));
  }
  dataset::write_file(out / "balanced.csv", dataset::to_csv(balanced.matrix, names_of(balanced.labels),
                                                            {{"synthetic", synth}, {"source_row", source}}));
  auto row_col = [](const std::vector<std::size_t>& rows) {
    std::vector<std::string> v;
    for (auto r : rows) v.push_back(std::to_string(r));
    return v;
  };
  dataset::write_file(out / "train.csv",
                      dataset::to_csv(parts.train_x, names_of(parts.train_y), {{"row", row_col(parts.train_rows)}}));
  dataset::write_file(out / "test.csv",
                      dataset::to_csv(parts.test_x, names_of(parts.test_y), {{"row", row_col(parts.test_rows)}}));

  const auto before = y.counts();
  const auto after = balanced.labels.counts();
  std::string counts_csv = "group,before,after\n";
  json counts = json::object();
  for (std::size_t g = 0; g < y.names.size(); ++g) {
    counts_csv += y.names[g] + "," + std::to_string(before[g]) + "," + std::to_string(after[g]) + "\n";
    counts[y.names[g]] = {{"before", before[g]}, {"after", after[g]}};
  }
  dataset::write_file(out / "counts.csv", counts_csv);

  json s;
  s["mode"] = c.faithful() ? "faithful" : "leakage_safe";
  s["rows_before"] = data.x.rows();
  s["rows_after"] = balanced.matrix.rows();
  s["synthetic_rows"] = std::count(balanced.synthetic.begin(), balanced.synthetic.end(), true);
  s["smote_k"] = c.get("smote.k").empty() ? json("default") : json(c.count("smote.k"));
  s["split_seed"] = split_seed;
  s["split_ratio"] = ratio;
  s["train_rows"] = parts.train_x.rows();
  s["test_rows"] = parts.test_x.rows();
  s["counts"] = counts;
  write_json(out / "balance.json", s);
  log("balance: " + std::to_string(data.x.rows()) + " -> " + std::to_string(balanced.matrix.rows()) + " rows (" +
      std::to_string(parts.train_x.rows()) + " train / " + std::to_string(parts.test_x.rows()) + " test)");
  return {"balance", s};
}

StageResult cmd_train(const PipelineConfig& c) {
  const auto train = load_table(c, stage_dir(c, "balance") / "train.csv", "balance");
  const auto y = balance::binarize(class_labels(train.labels), taxonomy());
  const auto out = stage_dir(c, "train");
  json list = json::array();
  std::vector<std::pair<fs::path, std::string>> pending;
  for (auto kind : c.model_kinds()) {
    const auto model = train_kind(c, kind, train.x, y);
    const auto doc = models::serialize(model);
    pending.emplace_back(model_path(c, kind), doc);
    json m;
    m["kind"] = std::string(models::to_string(kind));
    m["train_rows"] = train.x.rows();
    m["features"] = train.x.cols();
    m["sha256"] = sha256_hex(doc);
    list.push_back(m);
    log("train: " + std::string(models::to_string(kind)));
  }
  for (const auto& [path, doc] : pending) dataset::write_file(path, doc);
  json s;
  s["models"] = list;
  write_json(out / "train.json", s);
  return {"train", s};
}

StageResult cmd_evaluate(const PipelineConfig& c) {
  const auto test = load_table(c, stage_dir(c, "balance") / "test.csv", "balance");
  const auto y = balance::binarize(class_labels(test.labels), taxonomy());
  const auto kinds = c.model_kinds();
  const auto out = stage_dir(c, "evaluate");

  json list = json::array();
  std::string table = "model,accuracy,precision,recall,f1\n";
  std::optional<ModelKind> best;
  double best_acc = -1.0;
  json importance = json::object();
  std::vector<std::pair<fs::path, std::string>> pending;
  for (auto kind : kinds) {
    const auto model = load_model(c, kind);
    const auto m = models::evaluate(model, test.x, y);
    const auto name = std::string(models::to_string(kind));
    json e;
    e["model"] = name;
    e["metrics"] = metrics_json(m);
    list.push_back(e);
    table += name + "," + format_double(m.accuracy) + "," + format_double(m.precision) + "," +
             format_double(m.recall) + "," + format_double(m.f1) + "\n";
    // kinds are in GBT, RF, KNN order, so strict > keeps the earlier one on ties.
    if (m.accuracy > best_acc) {
      best_acc = m.accuracy;
      best = kind;
    }
    std::vector<models::ImportanceVector> imps;
    if (models::is_tree_model(model)) imps.push_back(models::importance_gain(model));
    imps.push_back(models::importance_permutation(model, test.x, y, c.count("importance.permutation_repeats"),
                                                  derive_seed(c.seed(), "permutation_" + name),
                                                  c.count("workers")));
    json top = json::object();
    for (const auto& imp : imps) {
      pending.emplace_back(importance_path(c, kind, imp.method), importance_csv(imp));
      json names = json::array();
      const auto ranking = consistency::rank_features(imp.scores);
      for (std::size_t r = 0; r < std::min<std::size_t>(5, ranking.size()); ++r) {
        names.push_back(imp.schema->names[ranking[r]]);
      }
      top[std::string(models::to_string(imp.method))] = names;
    }
    importance[name] = top;
    log("evaluate: " + name + " accuracy " + format_double(m.accuracy));
  }
  for (const auto& [path, doc] : pending) dataset::write_file(path, doc);

  json s;
  s["test_rows"] = test.x.rows();
  s["models"] = list;
  if (kinds.size() > 1) {
    json cmp = json::array();
    std::vector<std::size_t> order(list.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return list[a]["metrics"]["accuracy"].get<double>() > list[b]["metrics"]["accuracy"].get<double>();
    });
    for (auto i : order) cmp.push_back({{"model", list[i]["model"]}, {"accuracy", list[i]["metrics"]["accuracy"]}});
    s["comparison"] = cmp;
    dataset::write_file(out / "comparison.csv", table);
  }
  s["selected"] = std::string(models::to_string(*best));
  s["importance_top5"] = importance;
  write_json(out / "metrics.json", s);
  return {"evaluate", s};
}

StageResult cmd_explain(const PipelineConfig& c) {
  const auto kind = resolve_model(c, "explain.model");
  const auto model = load_model(c, kind);
  const auto train = load_table(c, stage_dir(c, "balance") / "train.csv", "balance");
  const auto test = load_table(c, stage_dir(c, "balance") / "test.csv", "balance");
  const auto y_test = balance::binarize(class_labels(test.labels), taxonomy());
  std::vector<std::size_t> samples;
  for (const auto& s : c.list("explain.samples")) {
    const auto idx = static_cast<std::size_t>(std::stoull(s));
    if (idx >= test.x.rows()) {
      throw Error(ErrorKind::Selection, "explain.samples: test row " + s + " out of range (test set has " +
                                            std::to_string(test.x.rows()) + " rows)");
    }
    samples.push_back(idx);
  }

  const auto background = background_rows(c, train.x);
  const auto eval_rows = balance::undersample(test.x.rows(), std::min(c.count("shap.eval"), test.x.rows()),
                                              derive_seed(c.seed(), "shap_eval"));
  const auto sc = shap_config(c);
  const auto global = explain::shap_global(model, test.x.select_rows(eval_rows), background, sc, c.number("shap.floor"));
  const auto& names = test.x.schema()->names;

  const auto out = stage_dir(c, "explain");
  std::vector<std::pair<fs::path, std::string>> pending;
  {
    std::string csv = "rank,feature,mean_abs,mean_abs_benign,mean_abs_attack,significant\n";
    for (std::size_t r = 0; r < global.ranking.size(); ++r) {
      const auto j = global.ranking[r];
      const bool sig = std::find(global.significant.begin(), global.significant.end(), j) != global.significant.end();
      csv += std::to_string(r + 1) + "," + names[j] + "," + format_double(global.mean_abs[j]) + "," +
             format_double(global.mean_abs_class[0][j]) + "," + format_double(global.mean_abs_class[1][j]) + "," +
             (sig ? "1" : "0") + "\n";
    }
    pending.emplace_back(out / "shap_global.csv", csv);
  }

  json sample_list = json::array();
  auto lp = lime_params(c, test.x.cols());
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto row = samples[n];
    const auto x = test.x.row(row);
    const auto shap = explain::shap_auto(model, x, background, sc, row);
    const auto force = explain::force_breakdown(shap);
    auto params = lp;
    params.seed = derive_seed(lp.seed, row);
    const auto lime = explain::lime_explain(model, x, params);

    auto force_csv = [&](const explain::ForceBreakdown& fb) {
      std::string csv = "order,feature,value,phi,cumulative,direction\n";
      for (std::size_t i = 0; i < fb.entries.size(); ++i) {
        const auto& e = fb.entries[i];
        csv += std::to_string(i + 1) + "," + e.name + "," + format_double(e.value) + "," + format_double(e.phi) + "," +
               format_double(e.cumulative) + "," + direction_of(e.phi) + "\n";
      }
      return csv;
    };
    const auto fcsv = force_csv(force);
    std::string lcsv = "rank,feature,value,weight\n";
    for (std::size_t i = 0; i < lime.features.size(); ++i) {
      const auto& f = lime.features[i];
      lcsv += std::to_string(i + 1) + "," + names[f.feature] + "," + format_double(x[f.feature]) + "," +
              format_double(f.weight) + "\n";
    }
    const auto tag = "sample_" + std::to_string(n + 1);
    pending.emplace_back(out / ("force_" + tag + ".csv"), fcsv);
    pending.emplace_back(out / ("lime_" + tag + ".csv"), lcsv);
    // Margin attributions are exact; the probability view is sampled.
    std::optional<explain::ShapValues> prob;
    if (shap.space == explain::OutputSpace::Margin) {
      const explain::OutputFn f = [&](std::span<const double> v) { return models::predict_proba(model, v); };
      prob = explain::shap_sampling(f, x, background, sc.n_permutations, derive_seed(derive_seed(sc.seed, "probability"), row));
      prob->schema = shap.schema;
      pending.emplace_back(out / ("force_" + tag + "_probability.csv"), force_csv(explain::force_breakdown(*prob)));
    }

    json e;
    e["sample"] = n + 1;
    e["test_row"] = row;
    e["label"] = y_test.values[row] == 1 ? "Attack" : "Benign";
    e["predicted"] = models::predict_class(model, x);
    e["probability"] = models::predict_proba(model, x);
    e["shap_space"] = std::string(explain::to_string(shap.space));
    e["base_value"] = shap.base_value;
    e["base_probability"] = shap.base_probability;
    e["output"] = shap.output;
    if (prob) {
      e["probability_base_value"] = prob->base_value;
      e["probability_output"] = prob->output;
    }
    json pos = json::array(), neg = json::array();
    for (auto j : force.positive) pos.push_back(names[j]);
    for (auto j : force.negative) neg.push_back(names[j]);
    e["toward_attack"] = pos;
    e["toward_benign"] = neg;
    json lf = json::array();
    for (const auto& f : lime.features) lf.push_back({{"feature", names[f.feature]}, {"weight", f.weight}});
    e["lime_features"] = lf;
    e["lime_intercept"] = lime.intercept;
    e["lime_local_prediction"] = lime.local_prediction;
    e["lime_kernel_width"] = lime.kernel_width;
    e["lime_seed"] = lime.seed;
    sample_list.push_back(e);
  }
  for (const auto& [path, doc] : pending) dataset::write_file(path, doc);

  json s;
  s["model"] = std::string(models::to_string(kind));
  s["space"] = std::string(explain::to_string(global.space));
  s["direction"] = "positive phi pushes toward Attack (class 1), negative toward Benign (class 0)";
  s["background_rows"] = background.rows();
  s["eval_rows"] = eval_rows.size();
  s["split_seed"] = derive_seed(c.seed(), "split");
  json top = json::array();
  for (std::size_t r = 0; r < std::min<std::size_t>(10, global.ranking.size()); ++r) {
    top.push_back(names[global.ranking[r]]);
  }
  s["shap_top10"] = top;
  s["significant_features"] = global.significant.size();
  s["significance_floor"] = global.floor;
  s["samples"] = sample_list;
  write_json(out / "explain.json", s);
  log("explain: " + std::string(models::to_string(kind)) + ", " + std::to_string(global.significant.size()) +
      " significant features, " + std::to_string(samples.size()) + " samples");
  return {"explain", s};
}

StageResult cmd_agree(const PipelineConfig& c) {
  const auto kind = resolve_model(c, "explain.model");
  const auto model = load_model(c, kind);
  const auto train = load_table(c, stage_dir(c, "balance") / "train.csv", "balance");
  const auto test = load_table(c, stage_dir(c, "balance") / "test.csv", "balance");
  const auto rows = balance::undersample(test.x.rows(), std::min(c.count("agree.samples"), test.x.rows()),
                                         derive_seed(c.seed(), "agree"));
  std::vector<consistency::RankingSource> extra;
  for (auto k : c.model_kinds()) extra.push_back(model_source(c, k, test.x.schema()));

  consistency::AgreementConfig ac;
  ac.shap = shap_config(c);
  ac.lime = lime_params(c, test.x.cols());
  ac.k = std::min(c.count("agree.k"), test.x.cols());
  ac.workers = c.count("workers");
  const auto report = consistency::agreement_report(model, test.x.select_rows(rows), rows, background_rows(c, train.x),
                                                    extra, ac);

  const auto out = stage_dir(c, "agree");
  json j;
  j["model"] = std::string(models::to_string(kind));
  j["report"] = consistency::to_json(report);
  std::string local = "row,model_class,shap_class,lime_class,overlap,sign_agreement\n";
  for (const auto& s : report.samples) {
    local += std::to_string(s.row) + "," + std::to_string(s.agreement.model_class) + "," +
             std::to_string(s.agreement.shap_class) + "," + std::to_string(s.agreement.lime_class) + "," +
             format_double(s.agreement.overlap) + "," +
             (s.agreement.sign_agreement ? format_double(*s.agreement.sign_agreement) : std::string()) + "\n";
  }
  std::vector<std::pair<fs::path, std::string>> pending{{out / "agreement.json", dump(j)},
                                                        {out / "local.csv", local}};
  if (!report.samples.empty()) {
    std::vector<explain::LimeExplanation> limes;
    for (const auto& s : report.samples) limes.push_back(s.lime);
    const auto agg = consistency::lime_aggregate(limes);
    std::string csv = "rank,feature,score\n";
    const auto ranking = consistency::rank_features(agg.scores);
    for (std::size_t r = 0; r < ranking.size(); ++r) {
      csv += std::to_string(r + 1) + "," + test.x.schema()->names[ranking[r]] + "," +
             format_double(agg.scores[ranking[r]]) + "\n";
    }
    pending.emplace_back(out / "lime_aggregate.csv", csv);
  }
  for (const auto& [path, doc] : pending) dataset::write_file(path, doc);

  json s;
  s["model"] = std::string(models::to_string(kind));
  s["samples"] = report.n;
  s["shap_model_agreement"] = report.shap_model_rate;
  s["shap_lime_agreement"] = report.shap_lime_rate;
  s["mean_top_k_overlap"] = report.mean_overlap;
  log("agree: " + std::to_string(report.n) + " samples, SHAP/LIME direction agreement " +
      format_double(report.shap_lime_rate));
  return {"agree", s};
}

StageResult cmd_rfe(const PipelineConfig& c) {
  const auto kind = resolve_model(c, "rfe.model");
  const auto train = load_table(c, stage_dir(c, "balance") / "train.csv", "balance");
  const auto test = load_table(c, stage_dir(c, "balance") / "test.csv", "balance");
  const auto y_train = balance::binarize(class_labels(train.labels), taxonomy());
  const auto y_test = balance::binarize(class_labels(test.labels), taxonomy());
  const auto schema = train.x.schema();
  const auto cfg = c.rfe();

  std::optional<std::vector<std::size_t>> seed_set;
  json seed_sources = json::array();
  if (c.flag("rfe.xai_seed")) {
    std::vector<consistency::RankingSource> sources;
    sources.push_back(read_scores(require_file(stage_dir(c, "explain") / "shap_global.csv", "explain"), schema,
                                  "shap_global", "feature", "mean_abs"));
    const auto lime_path = stage_dir(c, "agree") / "lime_aggregate.csv";
    if (fs::exists(lime_path)) sources.push_back(read_scores(lime_path, schema, "lime_aggregate", "feature", "score"));
    sources.push_back(model_source(c, kind, schema));
    for (const auto& s : sources) seed_sources.push_back(s.name);
    seed_set = rfe::xai_guided_seed(sources, c.count("rfe.seed_top"));
  }

  const rfe::Trainer trainer = [&](const FeatureMatrix& x, const LabelVector& y) { return train_kind(c, kind, x, y); };
  const bool on_test = c.get("rfe.scoring") == "test";
  const auto result = on_test ? rfe::rfe_run(trainer, train.x, y_train, test.x, y_test, cfg, seed_set)
                              : rfe::rfe_run(trainer, train.x, y_train, derive_seed(c.seed(), "rfe_split"), cfg, seed_set);
  const auto& trace = result.trace;

  // Final model: best feature set, full training split.
  const auto final_model = trainer(train.x.select_features(trace.best_features), y_train);
  const double final_acc =
      models::evaluate(final_model, test.x.select_features(trace.best_features), y_test).accuracy;
  const double baseline_acc = models::evaluate(load_model(c, kind), test.x, y_test).accuracy;

  const auto out = stage_dir(c, "rfe");
  json s;
  s["model"] = std::string(models::to_string(kind));
  s["scoring"] = on_test ? "test" : "validation";
  s["importance"] = std::string(rfe::to_string(cfg.importance_source));
  s["seed_sources"] = seed_sources;
  s["seed_features"] = seed_set ? json(seed_set->size()) : json();
  s["fold_baseline"] = trace.baseline_score;
  s["fold_best"] = trace.best_score;
  s["test_baseline"] = baseline_acc;
  s["test_final"] = final_acc;
  s["features_before"] = schema->width();
  s["features_after"] = trace.best_features.size();
  s["trace"] = rfe::to_json(trace);
  dataset::write_file(out / "rfe_trace.csv", rfe::trace_csv(trace));
  dataset::write_file(out / "rfe_features.txt", rfe::feature_manifest(trace));
  dataset::write_file(out / "model_rfe.txt", models::serialize(final_model));
  write_json(out / "rfe.json", s);
  log("rfe: " + std::to_string(schema->width()) + " -> " + std::to_string(trace.best_features.size()) +
      " features, fold " + format_double(trace.baseline_score) + " -> " + format_double(trace.best_score) +
      ", test " + format_double(baseline_acc) + " -> " + format_double(final_acc));
  return {"rfe", s};
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"ingest", "balance", "train", "evaluate", "explain", "agree", "rfe"};
  return names;
}

StageResult run_stage(const std::string& name, const PipelineConfig& config) {
  if (name == "ingest") return cmd_ingest(config);
  if (name == "balance") return cmd_balance(config);
  if (name == "train") return cmd_train(config);
  if (name == "evaluate") return cmd_evaluate(config);
  if (name == "explain") return cmd_explain(config);
  if (name == "agree") return cmd_agree(config);
  if (name == "rfe") return cmd_rfe(config);
  throw Error(ErrorKind::Config, "unknown stage '" + name + "'");
}

std::vector<ManifestEntry> manifest(const fs::path& out_dir) {
  std::vector<ManifestEntry> out;
  if (!fs::exists(out_dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(out_dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), out_dir).generic_string();
    if (rel == "run_report.json") continue;
    out.push_back({rel, e.file_size(), sha256_hex(dataset::read_file(e.path()))});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  return out;
}

json cmd_pipeline(const PipelineConfig& config) {
  config.validate();
  json stages = json::array();
  json sections = json::object();
  for (const auto& name : stage_names()) {
    const auto start = std::chrono::steady_clock::now();
    auto result = run_stage(name, config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    stages.push_back({{"name", name}, {"seconds", seconds}});
    sections[name] = std::move(result.summary);
  }
  json report;
  report["config"] = config.echo();
  report["stages"] = stages;
  for (const auto& el : sections.items()) report[el.key()] = el.value();
  json files = json::array();
  for (const auto& m : manifest(config.out_dir())) {
    files.push_back({{"path", m.path}, {"bytes", m.bytes}, {"sha256", m.sha256}});
  }
  report["manifest"] = files;
  write_json(config.out_dir() / "run_report.json", report);
  return report;
}

}  // namespace explia::pipeline
