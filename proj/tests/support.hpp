#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "explia/balance.hpp"
#include "explia/consistency.hpp"
#include "explia/explain.hpp"
#include "explia/models.hpp"
#include "explia/rfe.hpp"

namespace support {

using explia::Matrix;
using explia::dataset::FeatureMatrix;
using explia::dataset::LabelLevel;
using explia::dataset::LabelVector;
using explia::dataset::SchemaPtr;

inline SchemaPtr schema_of_width(std::size_t p, const std::string& prefix = "f") {
  std::vector<std::string> names;
  for (std::size_t j = 0; j < p; ++j) names.push_back(prefix + std::to_string(j));
  return explia::dataset::make_schema(std::move(names), p);
}

inline FeatureMatrix matrix(const std::vector<std::vector<double>>& rows, SchemaPtr schema = nullptr) {
  const std::size_t p = rows.empty() ? (schema ? schema->width() : 0) : rows.front().size();
  if (!schema) schema = schema_of_width(p);
  Matrix m(0, p);
  for (const auto& r : rows) m.append_row(r);
  return FeatureMatrix(schema, std::move(m));
}

inline LabelVector binary(std::vector<int> values) {
  LabelVector y;
  y.level = LabelLevel::Binary;
  y.values = std::move(values);
  y.names = {"Benign", "Attack"};
  return y;
}

inline Matrix gaussian(std::size_t n, std::size_t p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(n, p);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < p; ++c) m(r, c) = normal(rng);
  return m;
}

// First `informative` columns drive the label through a fixed linear rule;
// the rest are pure noise.
struct Planted {
  FeatureMatrix x;
  LabelVector y;
  std::vector<std::size_t> informative;
  std::vector<std::size_t> noise;
};

inline Planted planted(std::size_t n, std::size_t informative = 5, std::size_t noise = 15, std::uint64_t seed = 7) {
  const std::size_t p = informative + noise;
  auto m = gaussian(n, p, seed);
  std::vector<int> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < informative; ++j) s += (j % 2 == 0 ? 1.0 : -1.0) * m(r, j);
    labels[r] = s > 0.0 ? 1 : 0;
  }
  Planted out{FeatureMatrix(schema_of_width(p), std::move(m)), binary(std::move(labels)), {}, {}};
  for (std::size_t j = 0; j < p; ++j) (j < informative ? out.informative : out.noise).push_back(j);
  return out;
}

// A GBT with one tree that is a single leaf, so its output never varies.
inline explia::models::GbtModel constant_gbt(std::size_t p, double margin) {
  explia::models::GbtModel m;
  m.schema = schema_of_width(p);
  m.learning_rate = 1.0;
  m.base_score = margin;
  explia::models::DecisionTree t;
  t.nodes.push_back({});
  m.trees.push_back(t);
  return m;
}

// GBT with one depth-1 tree on `feature`.
inline explia::models::GbtModel stump_gbt(std::size_t p, int feature, double threshold, double left, double right) {
  explia::models::GbtModel m;
  m.schema = schema_of_width(p);
  m.learning_rate = 1.0;
  explia::models::DecisionTree t;
  explia::models::TreeNode root;
  root.feature = feature;
  root.threshold = threshold;
  root.left = 1;
  root.right = 2;
  root.gain = 1.0;
  root.cover = 2.0;
  explia::models::TreeNode l, r;
  l.value = left;
  l.cover = 1.0;
  r.value = right;
  r.cover = 1.0;
  t.nodes = {root, l, r};
  m.trees.push_back(t);
  return m;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("explia_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace support
