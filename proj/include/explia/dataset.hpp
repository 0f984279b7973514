#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "explia/core.hpp"

namespace explia::dataset {

// Ordered feature identifiers. Column i of any matrix is meaningful only
// relative to the schema it carries.
struct FeatureSchema {
  std::vector<std::string> names;
  std::size_t raw_width = 0;  // column count before zero-variance removal

  std::size_t width() const noexcept { return names.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  bool same_names(const FeatureSchema& other) const { return names == other.names; }
};

using SchemaPtr = std::shared_ptr<const FeatureSchema>;

SchemaPtr make_schema(std::vector<std::string> names, std::size_t raw_width = 0);

// The 40 retained CICIoT2023 flow features in their canonical order.
const std::vector<std::string>& ciciot_feature_names();
// The six columns that carry no variance in desk-scale CICIoT2023 subsamples.
const std::vector<std::string>& ciciot_constant_names();
// 46-column raw schema: the 40 canonical features followed by the constant ones.
SchemaPtr ciciot_raw_schema();

enum class LabelLevel { Subcategory, Class, Binary };

std::string_view to_string(LabelLevel level);
LabelLevel parse_level(std::string_view text);

class LabelTaxonomy {
 public:
  LabelTaxonomy(std::map<std::string, std::string> class_of, std::string benign_class);

  static const LabelTaxonomy& ciciot2023();

  const std::vector<std::string>& subcategory_names() const { return subcategories_; }
  const std::vector<std::string>& class_names() const { return classes_; }
  const std::string& benign_class() const { return benign_; }

  bool contains(std::string_view subcategory) const;
  bool is_class(std::string_view name) const;
  // Accepts a subcategory or a class name.
  const std::string& class_of(const std::string& label) const;
  int binary_of(const std::string& label) const;
  // Name of `subcategory` at the requested level.
  std::string label_at(LabelLevel level, const std::string& subcategory) const;
  // Sorted names for a level (binary: {"Benign", "Attack"} by id).
  std::vector<std::string> level_names(LabelLevel level) const;

 private:
  std::map<std::string, std::string> class_of_;
  std::vector<std::string> subcategories_;
  std::vector<std::string> classes_;
  std::string benign_;
};

// Rows with possibly missing (NaN) or non-finite cells plus raw label strings.
struct RawTable {
  SchemaPtr schema;
  Matrix values;
  std::vector<std::string> labels;
  std::vector<bool> known_label;

  std::size_t rows() const noexcept { return values.rows(); }
};

struct ScalerStats {
  SchemaPtr schema;
  std::vector<double> mean;
  std::vector<double> stddev;  // population convention
  std::size_t fit_rows = 0;

  std::vector<bool> zero_variance() const;
};

// Finite n x p values bound to one schema.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(SchemaPtr schema, Matrix values, std::optional<ScalerStats> scaler = std::nullopt);

  const SchemaPtr& schema() const noexcept { return schema_; }
  const Matrix& values() const noexcept { return values_; }
  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t cols() const noexcept { return values_.cols(); }
  std::span<const double> row(std::size_t r) const { return values_.row(r); }
  double operator()(std::size_t r, std::size_t c) const { return values_(r, c); }

  bool standardized() const noexcept { return scaler_.has_value(); }
  const std::optional<ScalerStats>& scaler() const noexcept { return scaler_; }

  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
  // Keeps `cols` in the given order; the schema is re-derived from them.
  FeatureMatrix select_features(std::span<const std::size_t> cols) const;

 private:
  SchemaPtr schema_;
  Matrix values_;
  std::optional<ScalerStats> scaler_;
};

struct LabelVector {
  LabelLevel level = LabelLevel::Binary;
  std::vector<int> values;
  std::vector<std::string> names;  // id -> label name

  std::size_t size() const noexcept { return values.size(); }
  LabelVector select(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> counts() const;
};

struct DatasetSplit {
  FeatureMatrix train_x;
  LabelVector train_y;
  FeatureMatrix test_x;
  LabelVector test_y;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::uint64_t seed = 0;
  double ratio = 0.8;
};

RawTable load_csv(const std::filesystem::path& path, const SchemaPtr& schema,
                  const LabelTaxonomy& taxonomy);

struct CleanReport {
  RawTable table;
  std::size_t dropped_nonfinite = 0;
  std::size_t dropped_duplicate = 0;
};

CleanReport clean(const RawTable& table);

// Concatenates tables that share a schema, in argument order.
RawTable concat(std::span<const RawTable> tables);

struct Encoded {
  FeatureMatrix matrix;
  LabelVector labels;
};

Encoded encode_labels(const RawTable& table, LabelLevel level, const LabelTaxonomy& taxonomy);

ScalerStats fit_standardizer(const FeatureMatrix& matrix);
FeatureMatrix standardize(const FeatureMatrix& matrix, const ScalerStats& stats);
Matrix destandardize(const FeatureMatrix& matrix);

struct ColumnDrop {
  FeatureMatrix matrix;
  std::vector<std::size_t> kept;
};

ColumnDrop drop_zero_variance(const FeatureMatrix& matrix, const ScalerStats& stats);

DatasetSplit split(const FeatureMatrix& matrix, const LabelVector& labels, double ratio,
                   std::uint64_t seed, bool stratify);

// Seeded choice of `count` files out of `files` (sorted first); count 0 keeps all.
std::vector<std::filesystem::path> choose_files(std::vector<std::filesystem::path> files,
                                                std::size_t count, std::uint64_t seed);

// Sidecar metadata: one `key = value` pair per line, `#` comments, keys in
// insertion order.
class KeyValueDoc {
 public:
  void set(std::string key, std::string value);
  std::optional<std::string> get(std::string_view key) const;
  std::string require(std::string_view key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_string() const;
  static KeyValueDoc parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static KeyValueDoc load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

void write_schema(KeyValueDoc& doc, const FeatureSchema& schema);
SchemaPtr read_schema(const KeyValueDoc& doc);
void write_scaler(KeyValueDoc& doc, const ScalerStats& stats);
ScalerStats read_scaler(const KeyValueDoc& doc, const SchemaPtr& schema);

// Features plus a `label` column of label names; extra columns are appended verbatim.
std::string to_csv(const FeatureMatrix& matrix, const std::vector<std::string>& labels,
                   const std::vector<std::pair<std::string, std::vector<std::string>>>& extra = {});

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace explia::dataset
