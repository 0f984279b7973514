#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "explia/dataset.hpp"

namespace explia::balance {

using dataset::FeatureMatrix;
using dataset::LabelLevel;
using dataset::LabelTaxonomy;
using dataset::LabelVector;

struct BalancePlan {
  LabelLevel group_level = LabelLevel::Class;
  std::map<std::string, std::size_t> target_count;

  // Benign capped at 2100, each of the seven attack classes moved to 300.
  static BalancePlan ciciot_default(const LabelTaxonomy& taxonomy = LabelTaxonomy::ciciot2023());
};

inline constexpr std::size_t kDefaultSmoteK = 5;

struct SmoteParams {
  // Unset means kDefaultSmoteK, clamped to (group size - 1) for tiny groups.
  // An explicit k is honored as given and validated.
  std::optional<std::size_t> k;
  std::uint64_t seed = 0;

  std::size_t effective_k(std::size_t group_size) const;
};

// Where a synthetic row came from: row = base + lambda * (neighbor - base).
struct SyntheticOrigin {
  std::size_t base = 0;
  std::size_t neighbor = 0;
  double lambda = 0.0;
};

struct SmoteResult {
  FeatureMatrix synthetic;
  std::vector<SyntheticOrigin> origins;  // indices into the input group
};

// Indices of the k Euclidean nearest rows to `row` within `group`, self
// excluded, ties broken by lower index.
std::vector<std::size_t> nearest_in_group(const FeatureMatrix& group, std::size_t row, std::size_t k);

SmoteResult smote_oversample(const FeatureMatrix& group, std::size_t target, const SmoteParams& params);

// Row indices of a seeded uniform sample without replacement, ascending.
std::vector<std::size_t> undersample(std::size_t group_size, std::size_t target, std::uint64_t seed);
FeatureMatrix undersample(const FeatureMatrix& group, std::size_t target, std::uint64_t seed);

struct BalanceResult {
  FeatureMatrix matrix;
  LabelVector labels;
  std::vector<bool> synthetic;
  // For real rows the source row in the input; for synthetic rows the base row.
  std::vector<std::size_t> source_row;
  // Parallel to rows; meaningful only where synthetic[i] (indices into the input).
  std::vector<SyntheticOrigin> origins;
};

BalanceResult apply_plan(const FeatureMatrix& matrix, const LabelVector& labels,
                         const BalancePlan& plan, const SmoteParams& params);

LabelVector binarize(const LabelVector& labels, const LabelTaxonomy& taxonomy);

}  // namespace explia::balance
