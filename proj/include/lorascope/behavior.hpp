// SPDX-License-Identifier: Apache-2.0
#pragma once

// Joins externally measured attack success rates with weight geometry.
// Every correlation goes through lorascope::stats.

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lorascope/adapter.hpp"
#include "lorascope/features.hpp"
#include "lorascope/stats.hpp"

namespace lorascope {

struct AsrRow {
  std::string adapter_id;
  double asr = 0.0;
  int n_prompts = 0;
  std::string judge_tag;
};

struct AsrTable {
  std::vector<AsrRow> rows;
  const AsrRow* find(const std::string& adapter_id) const;
};

/// Header must be `adapter_id,asr,n_prompts,judge_tag`. Errors name the line.
AsrTable ingest_asr(std::string_view csv);

/// A selection matches an entry when it names the entry's category or group.
using Selection = std::set<std::string>;
bool selected(const ManifestEntry& e, const Selection& s);

struct Elevation {
  double delta = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  int n_a = 0;
  int n_b = 0;
  bool meets_threshold = false;  ///< delta >= 0.10
};

Elevation mean_elevation(const AsrTable& table, const Manifest& manifest, const Selection& group_a,
                         const Selection& group_b);

struct GeoBehavior {
  stats::Correlation correlation;
  std::vector<std::string> excluded;  ///< echoed exclusion selection
  std::vector<std::string> joined_ids;
};

/// Spearman between per-adapter drift scores and ASR over adapters present
/// in both, minus excluded categories/groups.
GeoBehavior geo_behavior_rho(const std::map<std::string, double>& drift_scores, const AsrTable& table,
                             const Manifest& manifest, const Selection& exclusions);

struct DoseResponse {
  stats::Correlation correlation;
  std::map<std::int64_t, double> mean_asr_by_level;
};

/// Spearman over (intensity level, mean ASR at that level).
DoseResponse dose_response(const AsrTable& table, const Manifest& manifest, const Selection& selection);

/// Spearman between mean per-sublayer Frobenius norm and ASR.
stats::Correlation frob_vs_asr(std::span<const SpectralFeatureSet> features, const AsrTable& table,
                               const Manifest& manifest, const Selection& selection);

}  // namespace lorascope
