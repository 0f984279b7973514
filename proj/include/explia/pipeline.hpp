#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "explia/balance.hpp"
#include "explia/models.hpp"
#include "explia/rfe.hpp"

namespace explia::pipeline {

inline constexpr const char* kDataDirEnv = "EXPLIA_DATA_DIR";

// Flat `key = value` configuration. Every key has a default (see
// default_values()); unknown keys are rejected with ErrorKind::Config.
class PipelineConfig {
 public:
  PipelineConfig();

  static PipelineConfig parse(std::string_view text);
  static PipelineConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  std::string text(const std::string& key) const { return get(key); }
  std::uint64_t seed() const;
  std::size_t count(const std::string& key) const;
  double number(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;

  std::filesystem::path out_dir() const;
  // Config key, then the environment variable.
  std::filesystem::path data_dir() const;
  bool faithful() const;

  balance::BalancePlan plan(const dataset::LabelTaxonomy& taxonomy) const;
  balance::SmoteParams smote() const;
  models::GbtParams gbt() const;
  models::RfParams rf() const;
  std::size_t knn_k() const;
  std::vector<models::ModelKind> model_kinds() const;
  rfe::RfeConfig rfe() const;

  // Every key with its effective value, sorted by key.
  nlohmann::ordered_json echo() const;
  // Checks every typed value once so bad values fail before any work.
  void validate() const;

  static const std::map<std::string, std::string>& default_values();

 private:
  std::map<std::string, std::string> values_;
};

struct StageResult {
  std::string name;
  nlohmann::ordered_json summary;
};

StageResult cmd_ingest(const PipelineConfig& config);
StageResult cmd_balance(const PipelineConfig& config);
StageResult cmd_train(const PipelineConfig& config);
StageResult cmd_evaluate(const PipelineConfig& config);
StageResult cmd_explain(const PipelineConfig& config);
StageResult cmd_agree(const PipelineConfig& config);
StageResult cmd_rfe(const PipelineConfig& config);

// All stages in order, then run_report.json with timings and a manifest of
// every artifact and its SHA-256.
nlohmann::ordered_json cmd_pipeline(const PipelineConfig& config);

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::uintmax_t bytes = 0;
  std::string sha256;
};

std::vector<ManifestEntry> manifest(const std::filesystem::path& out_dir);

const std::vector<std::string>& stage_names();
StageResult run_stage(const std::string& name, const PipelineConfig& config);

}  // namespace explia::pipeline
