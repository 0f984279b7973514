#include "explia/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

namespace explia::dataset {

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

// Spelling variants seen in published CICIoT2023 headers.
std::string canonical_column(const std::string& name) {
  if (name == "Magnitue") return "Magnitude";
  if (name == "Protocol_Type") return "Protocol Type";
  if (name == "Tot_sum") return "Tot sum";
  if (name == "Tot_size") return "Tot size";
  return name;
}

}  // namespace

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

SchemaPtr make_schema(std::vector<std::string> names, std::size_t raw_width) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) throw Error(ErrorKind::Schema, "duplicate feature name '" + n + "'");
  }
  auto schema = std::make_shared<FeatureSchema>();
  schema->raw_width = raw_width == 0 ? names.size() : raw_width;
  schema->names = std::move(names);
  return schema;
}

const std::vector<std::string>& ciciot_feature_names() {
  static const std::vector<std::string> names = {
      "flow_duration", "Header_Length", "Protocol Type", "Duration", "Rate", "Srate",
      "fin_flag_number", "syn_flag_number", "rst_flag_number", "psh_flag_number",
      "ack_flag_number", "ack_count", "syn_count", "fin_count", "urg_count", "rst_count",
      "HTTP", "HTTPS", "DNS", "SSH", "TCP", "UDP", "ARP", "ICMP", "IPv", "LLC", "Tot sum",
      "Min", "Max", "AVG", "Std", "Tot size", "IAT", "Number", "Magnitude", "Radius",
      "Covariance", "Variance", "Weight", "DHCP"};
  return names;
}

const std::vector<std::string>& ciciot_constant_names() {
  static const std::vector<std::string> names = {"Drate",  "ece_flag_number", "cwr_flag_number",
                                                 "Telnet", "SMTP",            "IRC"};
  return names;
}

SchemaPtr ciciot_raw_schema() {
  static const SchemaPtr schema = [] {
    auto names = ciciot_feature_names();
    const auto& extra = ciciot_constant_names();
    names.insert(names.end(), extra.begin(), extra.end());
    return make_schema(std::move(names));
  }();
  return schema;
}

std::string_view to_string(LabelLevel level) {
  switch (level) {
    case LabelLevel::Subcategory: return "subcategory";
    case LabelLevel::Class: return "class";
    case LabelLevel::Binary: return "binary";
  }
  return "binary";
}

LabelLevel parse_level(std::string_view text) {
  if (text == "subcategory") return LabelLevel::Subcategory;
  if (text == "class") return LabelLevel::Class;
  if (text == "binary") return LabelLevel::Binary;
  throw Error(ErrorKind::Parameter, "unknown label level '" + std::string(text) + "'");
}

LabelTaxonomy::LabelTaxonomy(std::map<std::string, std::string> class_of, std::string benign_class)
    : class_of_(std::move(class_of)), benign_(std::move(benign_class)) {
  std::set<std::string> classes;
  for (const auto& [sub, cls] : class_of_) {
    subcategories_.push_back(sub);
    classes.insert(cls);
  }
  classes_.assign(classes.begin(), classes.end());
  if (!classes.contains(benign_)) {
    throw Error(ErrorKind::Parameter, "benign class '" + benign_ + "' has no subcategory");
  }
}

const LabelTaxonomy& LabelTaxonomy::ciciot2023() {
  static const LabelTaxonomy taxonomy = [] {
    std::map<std::string, std::string> m;
    for (const char* s : {"DDoS-ACK_Fragmentation", "DDoS-HTTP_Flood", "DDoS-ICMP_Flood",
                          "DDoS-ICMP_Fragmentation", "DDoS-PSHACK_Flood", "DDoS-RSTFINFlood",
                          "DDoS-SYN_Flood", "DDoS-SlowLoris", "DDoS-SynonymousIP_Flood",
                          "DDoS-TCP_Flood", "DDoS-UDP_Flood", "DDoS-UDP_Fragmentation"}) {
      m[s] = "DDoS";
    }
    for (const char* s : {"DoS-HTTP_Flood", "DoS-SYN_Flood", "DoS-TCP_Flood", "DoS-UDP_Flood"}) {
      m[s] = "DoS";
    }
    for (const char* s : {"Mirai-greeth_flood", "Mirai-greip_flood", "Mirai-udpplain"}) {
      m[s] = "Mirai";
    }
    for (const char* s : {"DNS_Spoofing", "MITM-ArpSpoofing"}) m[s] = "Spoofing";
    for (const char* s : {"Recon-HostDiscovery", "Recon-OSScan", "Recon-PingSweep",
                          "Recon-PortScan", "VulnerabilityScan"}) {
      m[s] = "Recon";
    }
    for (const char* s : {"BrowserHijacking", "CommandInjection", "SqlInjection",
                          "Uploading_Attack", "XSS", "Backdoor_Malware"}) {
      m[s] = "Web";
    }
    m["DictionaryBruteForce"] = "Bruteforce";
    m["BenignTraffic"] = "Benign";
    return LabelTaxonomy(std::move(m), "Benign");
  }();
  return taxonomy;
}

bool LabelTaxonomy::contains(std::string_view subcategory) const {
  return class_of_.find(std::string(subcategory)) != class_of_.end();
}

bool LabelTaxonomy::is_class(std::string_view name) const {
  return std::binary_search(classes_.begin(), classes_.end(), std::string(name));
}

const std::string& LabelTaxonomy::class_of(const std::string& label) const {
  if (auto it = class_of_.find(label); it != class_of_.end()) return it->second;
  auto it = std::lower_bound(classes_.begin(), classes_.end(), label);
  if (it != classes_.end() && *it == label) return *it;
  throw Error(ErrorKind::UnknownLabel, "'" + label + "'");
}

int LabelTaxonomy::binary_of(const std::string& label) const {
  if (label == "Attack") return 1;
  return class_of(label) == benign_ ? 0 : 1;
}

std::string LabelTaxonomy::label_at(LabelLevel level, const std::string& subcategory) const {
  switch (level) {
    case LabelLevel::Subcategory:
      if (!contains(subcategory)) throw Error(ErrorKind::UnknownLabel, "'" + subcategory + "'");
      return subcategory;
    case LabelLevel::Class: return class_of(subcategory);
    case LabelLevel::Binary: return binary_of(subcategory) == 0 ? "Benign" : "Attack";
  }
  return subcategory;
}

std::vector<std::string> LabelTaxonomy::level_names(LabelLevel level) const {
  switch (level) {
    case LabelLevel::Subcategory: return subcategories_;
    case LabelLevel::Class: return classes_;
    case LabelLevel::Binary: return {"Benign", "Attack"};
  }
  return {};
}

std::vector<bool> ScalerStats::zero_variance() const {
  std::vector<bool> out(stddev.size());
  for (std::size_t i = 0; i < stddev.size(); ++i) out[i] = stddev[i] == 0.0;
  return out;
}

FeatureMatrix::FeatureMatrix(SchemaPtr schema, Matrix values, std::optional<ScalerStats> scaler)
    : schema_(std::move(schema)), values_(std::move(values)), scaler_(std::move(scaler)) {
  if (!schema_) throw Error(ErrorKind::Schema, "feature matrix without schema");
  if (values_.cols() != schema_->width() && !(values_.rows() == 0 && values_.cols() == 0)) {
    throw Error(ErrorKind::Schema, "matrix width " + std::to_string(values_.cols()) +
                                       " does not match schema width " +
                                       std::to_string(schema_->width()));
  }
  if (values_.cols() != schema_->width()) values_ = Matrix(0, schema_->width());
  for (std::size_t r = 0; r < values_.rows(); ++r) {
    for (double v : values_.row(r)) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::Parameter, "non-finite value in feature matrix row " +
                                              std::to_string(r));
      }
    }
  }
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.schema_ = schema_;
  out.values_ = values_.select_rows(rows);
  out.scaler_ = scaler_;
  return out;
}

FeatureMatrix FeatureMatrix::select_features(std::span<const std::size_t> cols) const {
  std::vector<std::string> names;
  for (auto c : cols) {
    if (c >= schema_->width()) throw Error(ErrorKind::Schema, "feature index out of range");
    names.push_back(schema_->names[c]);
  }
  auto schema = make_schema(std::move(names), schema_->raw_width);
  std::optional<ScalerStats> scaler;
  if (scaler_) {
    ScalerStats s;
    s.schema = schema;
    s.fit_rows = scaler_->fit_rows;
    for (auto c : cols) {
      s.mean.push_back(scaler_->mean[c]);
      s.stddev.push_back(scaler_->stddev[c]);
    }
    scaler = std::move(s);
  }
  FeatureMatrix out;
  out.schema_ = std::move(schema);
  out.values_ = values_.select_cols(cols);
  out.scaler_ = std::move(scaler);
  return out;
}

LabelVector LabelVector::select(std::span<const std::size_t> rows) const {
  LabelVector out;
  out.level = level;
  out.names = names;
  out.values.reserve(rows.size());
  for (auto r : rows) out.values.push_back(values[r]);
  return out;
}

std::vector<std::size_t> LabelVector::counts() const {
  std::vector<std::size_t> out(names.size(), 0);
  for (int v : values) ++out.at(static_cast<std::size_t>(v));
  return out;
}

RawTable load_csv(const std::filesystem::path& path, const SchemaPtr& schema,
                  const LabelTaxonomy& taxonomy) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::Schema, path.string() + ": missing header row");
  }
  if (line.size() >= 3 && std::memcmp(line.data(), "\xEF\xBB\xBF", 3) == 0) line.erase(0, 3);

  const auto header = split_csv_line(line);
  std::optional<std::size_t> label_col;
  std::vector<std::optional<std::size_t>> source(schema->width());
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = canonical_column(trim(header[c]));
    if (name == "label") {
      label_col = c;
      continue;
    }
    if (auto idx = schema->index_of(name)) source[*idx] = c;
  }
  if (!label_col) throw Error(ErrorKind::Schema, path.string() + ": missing 'label' column");
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (!source[i]) {
      throw Error(ErrorKind::Schema,
                  path.string() + ": header lacks column '" + schema->names[i] + "'");
    }
  }

  RawTable table;
  table.schema = schema;
  table.values = Matrix(0, schema->width());
  std::vector<double> row(schema->width());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::Schema, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                         std::to_string(header.size()) + " cells, found " +
                                         std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = parse_double(cells[*source[i]]);
    table.values.append_row(row);
    auto label = trim(cells[*label_col]);
    table.known_label.push_back(taxonomy.contains(label) || taxonomy.is_class(label));
    table.labels.push_back(std::move(label));
  }
  return table;
}

CleanReport clean(const RawTable& table) {
  CleanReport report;
  report.table.schema = table.schema;
  report.table.values = Matrix(0, table.values.cols());
  std::unordered_set<std::string> seen;
  std::string key;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto row = table.values.row(r);
    if (!std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); })) {
      ++report.dropped_nonfinite;
      continue;
    }
    key.clear();
    for (double v : row) {
      const double z = v == 0.0 ? 0.0 : v;  // -0.0 equals +0.0
      key.append(reinterpret_cast<const char*>(&z), sizeof z);
    }
    key += '\x1f';
    key += table.labels[r];
    if (!seen.insert(key).second) {
      ++report.dropped_duplicate;
      continue;
    }
    report.table.values.append_row(row);
    report.table.labels.push_back(table.labels[r]);
    report.table.known_label.push_back(table.known_label.empty() ? true : table.known_label[r]);
  }
  return report;
}

RawTable concat(std::span<const RawTable> tables) {
  if (tables.empty()) throw Error(ErrorKind::EmptyInput, "no tables to concatenate");
  RawTable out;
  out.schema = tables.front().schema;
  out.values = Matrix(0, out.schema->width());
  for (const auto& t : tables) {
    if (!t.schema->same_names(*out.schema)) throw Error(ErrorKind::Schema, "schema mismatch");
    for (std::size_t r = 0; r < t.rows(); ++r) out.values.append_row(t.values.row(r));
    out.labels.insert(out.labels.end(), t.labels.begin(), t.labels.end());
    out.known_label.insert(out.known_label.end(), t.known_label.begin(), t.known_label.end());
  }
  return out;
}

Encoded encode_labels(const RawTable& table, LabelLevel level, const LabelTaxonomy& taxonomy) {
  std::set<std::string> unknown;
  for (const auto& l : table.labels) {
    const bool ok = level == LabelLevel::Subcategory ? taxonomy.contains(l)
                                                     : taxonomy.contains(l) || taxonomy.is_class(l);
    if (!ok) unknown.insert(l);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + ("'" + u + "'");
    throw Error(ErrorKind::UnknownLabel, list);
  }

  LabelVector labels;
  labels.level = level;
  labels.names = taxonomy.level_names(level);
  labels.values.reserve(table.rows());
  for (const auto& l : table.labels) {
    if (level == LabelLevel::Binary) {
      labels.values.push_back(taxonomy.binary_of(l));
    } else {
      const auto name = level == LabelLevel::Class ? taxonomy.class_of(l) : l;
      auto it = std::lower_bound(labels.names.begin(), labels.names.end(), name);
      labels.values.push_back(static_cast<int>(it - labels.names.begin()));
    }
  }
  return {FeatureMatrix(table.schema, table.values), std::move(labels)};
}

ScalerStats fit_standardizer(const FeatureMatrix& matrix) {
  if (matrix.rows() == 0) throw Error(ErrorKind::EmptyInput, "cannot fit scaler on zero rows");
  const auto n = static_cast<double>(matrix.rows());
  ScalerStats stats;
  stats.schema = matrix.schema();
  stats.fit_rows = matrix.rows();
  stats.mean.assign(matrix.cols(), 0.0);
  stats.stddev.assign(matrix.cols(), 0.0);
  for (std::size_t c = 0; c < matrix.cols(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < matrix.rows(); ++r) sum += matrix(r, c);
    const double mean = sum / n;
    double ss = 0.0;
    bool constant = true;
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
      const double d = matrix(r, c) - mean;
      ss += d * d;
      constant = constant && matrix(r, c) == matrix(0, c);
    }
    stats.mean[c] = constant ? matrix(0, c) : mean;
    stats.stddev[c] = constant ? 0.0 : std::sqrt(ss / n);
  }
  return stats;
}

FeatureMatrix standardize(const FeatureMatrix& matrix, const ScalerStats& stats) {
  if (!stats.schema || !stats.schema->same_names(*matrix.schema())) {
    throw Error(ErrorKind::Schema, "scaler stats were fitted on a different schema");
  }
  Matrix out = matrix.values();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      if (stats.stddev[c] > 0.0) out(r, c) = (out(r, c) - stats.mean[c]) / stats.stddev[c];
    }
  }
  ScalerStats bound = stats;
  bound.schema = matrix.schema();
  return FeatureMatrix(matrix.schema(), std::move(out), std::move(bound));
}

Matrix destandardize(const FeatureMatrix& matrix) {
  if (!matrix.scaler()) return matrix.values();
  const auto& s = *matrix.scaler();
  Matrix out = matrix.values();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      if (s.stddev[c] > 0.0) out(r, c) = out(r, c) * s.stddev[c] + s.mean[c];
    }
  }
  return out;
}

ColumnDrop drop_zero_variance(const FeatureMatrix& matrix, const ScalerStats& stats) {
  if (stats.stddev.size() != matrix.cols()) throw Error(ErrorKind::Schema, "scaler width mismatch");
  std::vector<std::size_t> kept;
  for (std::size_t c = 0; c < matrix.cols(); ++c) {
    if (stats.stddev[c] > 0.0) kept.push_back(c);
  }
  return {matrix.select_features(kept), kept};
}

DatasetSplit split(const FeatureMatrix& matrix, const LabelVector& labels, double ratio,
                   std::uint64_t seed, bool stratify) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorKind::Parameter, "split ratio must be in (0,1)");
  if (matrix.rows() != labels.size()) throw Error(ErrorKind::Parameter, "matrix/label length mismatch");

  std::mt19937_64 rng(seed);
  DatasetSplit out;
  out.seed = seed;
  out.ratio = ratio;
  if (stratify) {
    std::map<int, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < labels.size(); ++i) strata[labels.values[i]].push_back(i);
    for (auto& [label, rows] : strata) {
      if (rows.size() < 2) {
        const auto name = static_cast<std::size_t>(label) < labels.names.size()
                              ? labels.names[static_cast<std::size_t>(label)]
                              : std::to_string(label);
        throw Error(ErrorKind::Stratification,
                    "label '" + name + "' has " + std::to_string(rows.size()) + " row(s)");
      }
      std::shuffle(rows.begin(), rows.end(), rng);
      auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(rows.size())));
      n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
      out.train_rows.insert(out.train_rows.end(), rows.begin(), rows.begin() + n_train);
      out.test_rows.insert(out.test_rows.end(), rows.begin() + n_train, rows.end());
    }
  } else {
    std::vector<std::size_t> rows(labels.size());
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_train =
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(rows.size())));
    out.train_rows.assign(rows.begin(), rows.begin() + n_train);
    out.test_rows.assign(rows.begin() + n_train, rows.end());
  }
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  out.train_x = matrix.select_rows(out.train_rows);
  out.train_y = labels.select(out.train_rows);
  out.test_x = matrix.select_rows(out.test_rows);
  out.test_y = labels.select(out.test_rows);
  return out;
}

std::vector<std::filesystem::path> choose_files(std::vector<std::filesystem::path> files,
                                                std::size_t count, std::uint64_t seed) {
  std::sort(files.begin(), files.end());
  if (count == 0 || count >= files.size()) return files;
  std::mt19937_64 rng(seed);
  std::shuffle(files.begin(), files.end(), rng);
  files.resize(count);
  std::sort(files.begin(), files.end());
  return files;
}

void KeyValueDoc::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

std::optional<std::string> KeyValueDoc::get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string KeyValueDoc::require(std::string_view key) const {
  auto v = get(key);
  if (!v) throw Error(ErrorKind::CorruptDocument, "missing key '" + std::string(key) + "'");
  return *v;
}

std::string KeyValueDoc::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

KeyValueDoc KeyValueDoc::parse(std::string_view text) {
  KeyValueDoc doc;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::CorruptDocument,
                  "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    doc.entries_.emplace_back(trim(std::string_view(t).substr(0, eq)),
                              trim(std::string_view(t).substr(eq + 1)));
  }
  return doc;
}

void KeyValueDoc::save(const std::filesystem::path& path) const { write_file(path, to_string()); }

KeyValueDoc KeyValueDoc::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void write_schema(KeyValueDoc& doc, const FeatureSchema& schema) {
  doc.set("schema.width", std::to_string(schema.width()));
  doc.set("schema.raw_width", std::to_string(schema.raw_width));
  for (std::size_t i = 0; i < schema.width(); ++i) {
    doc.set("schema.feature." + std::to_string(i), schema.names[i]);
  }
}

SchemaPtr read_schema(const KeyValueDoc& doc) {
  const auto width = std::stoul(doc.require("schema.width"));
  std::vector<std::string> names;
  for (std::size_t i = 0; i < width; ++i) names.push_back(doc.require("schema.feature." + std::to_string(i)));
  return make_schema(std::move(names), std::stoul(doc.require("schema.raw_width")));
}

void write_scaler(KeyValueDoc& doc, const ScalerStats& stats) {
  doc.set("scaler.fit_rows", std::to_string(stats.fit_rows));
  for (std::size_t i = 0; i < stats.mean.size(); ++i) {
    doc.set("scaler.mean." + std::to_string(i), format_double(stats.mean[i]));
    doc.set("scaler.std." + std::to_string(i), format_double(stats.stddev[i]));
  }
}

ScalerStats read_scaler(const KeyValueDoc& doc, const SchemaPtr& schema) {
  ScalerStats s;
  s.schema = schema;
  s.fit_rows = std::stoul(doc.require("scaler.fit_rows"));
  for (std::size_t i = 0; i < schema->width(); ++i) {
    s.mean.push_back(parse_double(doc.require("scaler.mean." + std::to_string(i))));
    s.stddev.push_back(parse_double(doc.require("scaler.std." + std::to_string(i))));
  }
  return s;
}

std::string to_csv(const FeatureMatrix& matrix, const std::vector<std::string>& labels,
                   const std::vector<std::pair<std::string, std::vector<std::string>>>& extra) {
  std::string out;
  for (const auto& n : matrix.schema()->names) out += csv_escape(n) + ",";
  out += "label";
  for (const auto& [name, _] : extra) out += "," + csv_escape(name);
  out += "\n";
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (double v : matrix.row(r)) out += format_double(v) + ",";
    out += csv_escape(labels.at(r));
    for (const auto& [_, col] : extra) out += "," + csv_escape(col.at(r));
    out += "\n";
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

}  // namespace explia::dataset
