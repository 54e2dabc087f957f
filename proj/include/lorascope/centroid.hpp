// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lorascope/adapter.hpp"
#include "lorascope/types.hpp"

namespace lorascope {

struct CentroidSublayer {
  Matrix left_vectors;    ///< d x k, sign-fixed
  Vector singular_values; ///< k values of the mean delta
  bool degenerate = false;
};

/// Healthy reference: per sublayer, the top-k left singular vectors of the
/// mean healthy delta.
struct CentroidModel {
  std::map<SublayerKey, CentroidSublayer> per_sublayer;
  /// Training-split healthy adapters averaged into the mean, sorted.
  std::vector<std::string> source_adapter_ids;
  /// Healthy adapters deliberately excluded (test split), for leakage audits.
  std::vector<std::string> excluded_adapter_ids;
  int k = 0;
  ScalePolicy policy = ScalePolicy::unit;
};

/// Mean-then-SVD. Inputs are summed in adapter_id order, so the result does
/// not depend on the order of `healthy`.
CentroidModel build_centroid(std::span<const AdapterDelta> healthy, int k, unsigned threads = 1);

/// Writes `centroid.{layer}.{module}.U` tensors to `container_path` and the
/// remaining metadata to `sidecar_path` (JSON).
void save_centroid(const CentroidModel& model, const std::filesystem::path& container_path,
                   const std::filesystem::path& sidecar_path);
CentroidModel load_centroid(const std::filesystem::path& container_path,
                            const std::filesystem::path& sidecar_path);

}  // namespace lorascope
