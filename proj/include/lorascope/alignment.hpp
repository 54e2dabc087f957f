// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lorascope/adapter.hpp"
#include "lorascope/types.hpp"

namespace lorascope {

/// Externally trained linear-probe normals, one per layer.
struct ProbeNormals {
  std::map<int, Vector> per_layer;  ///< unit vectors
  int d_act = 0;
  std::string source_tag;
  /// Load-time notes (e.g. renormalised vectors).
  std::vector<std::string> warnings;
};

/// `{layers: [{layer, vector}], d_act, source_tag}`. Vectors are normalised;
/// a warning is recorded when a norm is off by more than 1e-6.
ProbeNormals parse_probes(std::string_view json_text);

/// E[max_{i<k} |cos(n, u_i)|] for n uniform on the sphere in R^d and any
/// orthonormal u_1..u_k, by seeded Monte Carlo.
double random_alignment_baseline(int d, int k, int draws = 20000, std::uint64_t seed = 0);

struct AlignmentReport {
  ModuleKind module = ModuleKind::query_projection;
  int k = 0;
  std::map<int, double> per_layer;
  double max = 0.0;
  int argmax_layer = -1;
  double mean = 0.0;
  /// Expected alignment of a random unit vector at this dimension and k.
  double random_baseline = 0.0;
  /// mean / random_baseline (our definition; see README).
  double mean_ratio = 0.0;
};

AlignmentReport alignment_report(const AdapterDelta& delta, const ProbeNormals& probes, ModuleKind module, int k,
                                 int baseline_draws = 20000, std::uint64_t seed = 0);

std::string alignment_report_json(const std::string& adapter_id, const std::vector<AlignmentReport>& reports,
                                  const ProbeNormals& probes);

}  // namespace lorascope
