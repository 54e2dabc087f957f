// SPDX-License-Identifier: Apache-2.0
#pragma once

// The evaluation battery: binary healthy-vs-drift detection, the pairwise
// group grid over feature/module splits, ordinal severity, cross-method
// transfer and feature-family importance.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lorascope/adapter.hpp"
#include "lorascope/centroid.hpp"
#include "lorascope/classify.hpp"
#include "lorascope/features.hpp"
#include "lorascope/stats.hpp"

namespace lorascope {

enum class FeatureSplit : std::uint8_t { all, magnitude, shape, direction };
enum class ModuleSplit : std::uint8_t { both, query, value };

std::string_view to_string(FeatureSplit s);
std::string_view to_string(ModuleSplit s);
FeatureSplit parse_feature_split(std::string_view s);
ModuleSplit parse_module_split(std::string_view s);
std::set<FeatureFamily> families_of(FeatureSplit s);
std::set<ModuleKind> modules_of(ModuleSplit s);

struct EvalConfig {
  int k = 8;
  double lambda = 1.0;
  double ratio = 0.7;
  std::uint64_t seed = 42;
  int bootstrap_resamples = 1000;
  double ci_level = 0.95;
  /// The first entry of each list is the primary split used for the binary
  /// model, ordinal severity, transfer and drift probabilities.
  std::vector<FeatureSplit> feature_splits = {FeatureSplit::all, FeatureSplit::magnitude, FeatureSplit::shape,
                                              FeatureSplit::direction};
  std::vector<ModuleSplit> module_splits = {ModuleSplit::both, ModuleSplit::query, ModuleSplit::value};
  std::set<Category> drift_categories = {Category::inverted_harmlessness, Category::inverted_helpfulness};
  std::set<Category> transfer_categories = {Category::steering};
  unsigned threads = 1;
};

/// One global plan for a population: stratified by group.
SplitPlan population_split(const std::vector<AdapterMetadata>& labels, double ratio, std::uint64_t seed);

/// Healthy adapters on the training side of `plan`.
std::vector<std::string> centroid_source_ids(const std::vector<AdapterMetadata>& labels, const SplitPlan& plan);

struct CellResult {
  std::string comparison;
  FeatureSplit feature_split = FeatureSplit::all;
  ModuleSplit module_split = ModuleSplit::both;
  double auc = 0.0;
  stats::ConfidenceInterval ci;
  int n_train = 0;
  int n_test = 0;
  std::uint64_t seed = 0;
  std::string negative;  ///< class 0 description
  std::string positive;  ///< class 1 description
};

struct OrdinalResult {
  std::string group;
  std::optional<stats::Correlation> correlation;
  int levels = 0;
  std::string note;  ///< why the correlation is absent
};

struct DriftScore {
  std::string adapter_id;
  Category category = Category::healthy;
  std::string group;
  std::optional<std::int64_t> intensity;
  double log_odds = 0.0;
  double probability = 0.0;
  bool in_train = false;
};

struct EvalReport {
  EvalConfig config;
  SplitPlan plan;
  std::vector<CellResult> cells;
  std::vector<OrdinalResult> ordinal;
  std::optional<CellResult> cross_method;
  std::vector<DriftScore> drift;
  FamilyImportance importance;
  ClassifierModel binary_model;
  std::vector<std::string> pairwise_groups;
  std::vector<std::string> notes;
  std::vector<std::string> centroid_sources;

  const CellResult& cell(const std::string& comparison, FeatureSplit f, ModuleSplit m) const;
};

/// Trains on the `plan` training rows among `ids`, scores the test rows.
CellResult evaluate_cell(const FeatureMatrix& full, const std::vector<std::string>& ids, const std::vector<int>& labels,
                         const SplitPlan& plan, FeatureSplit f, ModuleSplit m, const EvalConfig& config,
                         std::uint64_t seed, ClassifierModel* model_out = nullptr);

/// Spearman of scores against intensities; needs 3 distinct levels.
stats::Correlation ordinal_severity(std::span<const double> scores, std::span<const double> intensity);

/// `full` must carry labels. `centroid_sources` is echoed in the report.
EvalReport run_evaluation(const FeatureMatrix& full, const SplitPlan& plan, const EvalConfig& config,
                          std::vector<std::string> centroid_sources = {});

std::string eval_config_json(const EvalConfig& c);  ///< embedded in the report metadata
std::string report_to_json(const EvalReport& r);
std::string report_to_csv(const EvalReport& r);

/// Plain-text tables (population, pairwise grid, module split, transfer,
/// ordinal, importance) from a report JSON document.
std::string render_report(std::string_view report_json, const Manifest* manifest = nullptr);

}  // namespace lorascope
