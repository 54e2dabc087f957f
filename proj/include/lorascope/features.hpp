// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lorascope/adapter.hpp"
#include "lorascope/centroid.hpp"
#include "lorascope/spectral.hpp"
#include "lorascope/types.hpp"

namespace lorascope {

struct SublayerFeatures {
  MagnitudeFeatures<double> magnitude;
  ShapeFeatures<double> shape;
  std::optional<Vector> direction;
};

struct SpectralFeatureSet {
  std::string adapter_id;
  int k = 0;
  std::map<SublayerKey, SublayerFeatures> per_sublayer;

  bool has_direction() const;
  std::vector<SublayerKey> degenerate_sublayers() const;
};

/// Cosines of the adapter's top-k left singular vectors to the centroid's.
Vector direction_features(const SvdResult<double>& s, const CentroidModel& centroid, const SublayerKey& key,
                          int k);

/// Direction features are present iff `centroid` is non-null.
SpectralFeatureSet extract_features(const AdapterDelta& delta, const CentroidModel* centroid, int k,
                                    unsigned threads = 1);

struct FeatureColumn {
  SublayerKey key;
  FeatureFamily family = FeatureFamily::magnitude;
  std::string name;

  /// "<layer>.<module>.<family>.<name>"
  std::string label() const;
  bool operator==(const FeatureColumn&) const = default;
};

/// Feature names of one sublayer record, in column order.
std::vector<std::pair<FeatureFamily, std::string>> feature_names(int k);

struct FeatureMatrix {
  std::vector<std::string> rows;
  std::vector<FeatureColumn> columns;
  Matrix values;
  std::vector<AdapterMetadata> labels;

  Eigen::Index row_index(const std::string& adapter_id) const;
  FeatureMatrix select_rows(std::span<const std::string> ids) const;
  /// Keeps matching columns in their existing order.
  FeatureMatrix filter_columns(const std::set<FeatureFamily>& families,
                               const std::set<ModuleKind>& modules) const;
};

inline const std::set<FeatureFamily> kAllFamilies = {FeatureFamily::magnitude, FeatureFamily::shape,
                                                     FeatureFamily::direction};
inline const std::set<ModuleKind> kAllModules = {ModuleKind::query_projection, ModuleKind::value_projection};

/// Columns ordered by sublayer, then family, then feature name order.
/// `labels` (optional) supplies per-row metadata in the order of `features`.
FeatureMatrix assemble_matrix(std::span<const SpectralFeatureSet> features,
                              const std::set<FeatureFamily>& family_filter = kAllFamilies,
                              const std::set<ModuleKind>& module_filter = kAllModules,
                              std::span<const AdapterMetadata> labels = {});

/// CSV with header `adapter_id,<column labels>` and 17 significant digits.
std::string feature_matrix_csv(const FeatureMatrix& m);
/// JSON array of row labels.
std::string feature_labels_json(const FeatureMatrix& m);
FeatureMatrix parse_feature_matrix(std::string_view csv, std::string_view labels_json);

}  // namespace lorascope
