#include "explia/balance.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace explia::balance {

BalancePlan BalancePlan::ciciot_default(const LabelTaxonomy& taxonomy) {
  BalancePlan plan;
  plan.group_level = LabelLevel::Class;
  for (const auto& cls : taxonomy.class_names()) {
    plan.target_count[cls] = cls == taxonomy.benign_class() ? 2100 : 300;
  }
  return plan;
}

std::size_t SmoteParams::effective_k(std::size_t group_size) const {
  if (k) return *k;
  return std::min(kDefaultSmoteK, group_size > 0 ? group_size - 1 : 0);
}

std::vector<std::size_t> nearest_in_group(const FeatureMatrix& group, std::size_t row, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(group.rows());
  const auto x = group.row(row);
  for (std::size_t j = 0; j < group.rows(); ++j) {
    if (j == row) continue;
    const auto y = group.row(j);
    double d = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) d += (x[c] - y[c]) * (x[c] - y[c]);
    dist.emplace_back(d, j);
  }
  k = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
  return out;
}

SmoteResult smote_oversample(const FeatureMatrix& group, std::size_t target, const SmoteParams& params) {
  const std::size_t n = group.rows();
  if (n < 2) {
    throw Error(ErrorKind::CannotInterpolate,
                "SMOTE needs at least 2 rows, group has " + std::to_string(n));
  }
  if (target < n) throw Error(ErrorKind::Parameter, "SMOTE target below group size");
  const std::size_t k = params.effective_k(n);
  if (k < 1 || k >= n) {
    throw Error(ErrorKind::Parameter, "SMOTE k=" + std::to_string(k) + " must be in [1, " +
                                          std::to_string(n - 1) + "] for a group of " +
                                          std::to_string(n));
  }

  SmoteResult result;
  const std::size_t needed = target - n;
  Matrix rows(needed, group.cols());
  result.origins.reserve(needed);
  if (needed > 0) {
    std::mt19937_64 rng(params.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<std::vector<std::size_t>> neighbors(n);
    for (std::size_t j = 0; j < needed; ++j) {
      const std::size_t base = order[j % n];
      if (neighbors[base].empty()) neighbors[base] = nearest_in_group(group, base, k);
      const std::size_t nb = neighbors[base][pick(rng)];
      const double lambda = unit(rng);
      auto out = rows.row(j);
      const auto xi = group.row(base);
      const auto xn = group.row(nb);
      for (std::size_t c = 0; c < out.size(); ++c) out[c] = xi[c] + lambda * (xn[c] - xi[c]);
      result.origins.push_back({base, nb, lambda});
    }
  }
  result.synthetic = FeatureMatrix(group.schema(), std::move(rows), group.scaler());
  return result;
}

std::vector<std::size_t> undersample(std::size_t group_size, std::size_t target, std::uint64_t seed) {
  if (target > group_size) {
    throw Error(ErrorKind::Parameter, "undersample target " + std::to_string(target) +
                                          " exceeds group size " + std::to_string(group_size));
  }
  std::vector<std::size_t> idx(group_size);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(target);
  std::sort(idx.begin(), idx.end());
  return idx;
}

FeatureMatrix undersample(const FeatureMatrix& group, std::size_t target, std::uint64_t seed) {
  const auto idx = undersample(group.rows(), target, seed);
  return group.select_rows(idx);
}

BalanceResult apply_plan(const FeatureMatrix& matrix, const LabelVector& labels,
                         const BalancePlan& plan, const SmoteParams& params) {
  if (labels.level != plan.group_level) {
    throw Error(ErrorKind::Parameter, "labels are at level '" +
                                          std::string(dataset::to_string(labels.level)) +
                                          "' but the plan targets '" +
                                          std::string(dataset::to_string(plan.group_level)) + "'");
  }
  if (labels.size() != matrix.rows()) throw Error(ErrorKind::Parameter, "matrix/label length mismatch");
  for (const auto& [name, target] : plan.target_count) {
    if (target == 0) throw Error(ErrorKind::Parameter, "target for '" + name + "' must be positive");
    if (std::find(labels.names.begin(), labels.names.end(), name) == labels.names.end()) {
      throw Error(ErrorKind::UnknownLabel, "plan group '" + name + "' is not a label at this level");
    }
  }

  std::vector<std::vector<std::size_t>> members(labels.names.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    members.at(static_cast<std::size_t>(labels.values[i])).push_back(i);
  }

  BalanceResult out;
  out.labels.level = labels.level;
  out.labels.names = labels.names;
  Matrix values(0, matrix.cols());

  auto push_real = [&](std::size_t src, int label) {
    values.append_row(matrix.row(src));
    out.labels.values.push_back(label);
    out.synthetic.push_back(false);
    out.source_row.push_back(src);
    out.origins.push_back({});
  };

  for (std::size_t g = 0; g < labels.names.size(); ++g) {
    const auto& name = labels.names[g];
    const auto& rows = members[g];
    const int label = static_cast<int>(g);
    auto it = plan.target_count.find(name);
    if (it == plan.target_count.end() || it->second == rows.size()) {
      for (auto r : rows) push_real(r, label);
      continue;
    }
    const std::size_t target = it->second;
    const std::uint64_t child = derive_seed(params.seed, name);
    if (target < rows.size()) {
      for (auto i : undersample(rows.size(), target, child)) push_real(rows[i], label);
      continue;
    }
    if (rows.size() < 2) {
      throw Error(ErrorKind::CannotInterpolate,
                  "group '" + name + "' has " + std::to_string(rows.size()) + " row(s)");
    }
    const auto group = matrix.select_rows(rows);
    SmoteParams child_params = params;
    child_params.seed = child;
    SmoteResult smote;
    try {
      smote = smote_oversample(group, target, child_params);
    } catch (const Error& e) {
      throw Error(e.kind(), "group '" + name + "': " + e.what());
    }
    for (auto r : rows) push_real(r, label);
    for (std::size_t j = 0; j < smote.synthetic.rows(); ++j) {
      values.append_row(smote.synthetic.row(j));
      out.labels.values.push_back(label);
      out.synthetic.push_back(true);
      const auto& o = smote.origins[j];
      out.source_row.push_back(rows[o.base]);
      out.origins.push_back({rows[o.base], rows[o.neighbor], o.lambda});
    }
  }
  out.matrix = FeatureMatrix(matrix.schema(), std::move(values), matrix.scaler());
  return out;
}

LabelVector binarize(const LabelVector& labels, const LabelTaxonomy& taxonomy) {
  LabelVector out;
  out.level = LabelLevel::Binary;
  out.names = taxonomy.level_names(LabelLevel::Binary);
  out.values.reserve(labels.size());
  for (int v : labels.values) {
    if (labels.level == LabelLevel::Binary) {
      out.values.push_back(v);
    } else {
      out.values.push_back(taxonomy.binary_of(labels.names.at(static_cast<std::size_t>(v))));
    }
  }
  return out;
}

}  // namespace explia::balance
