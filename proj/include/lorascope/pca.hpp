// SPDX-License-Identifier: Apache-2.0
#pragma once

// PCA of flattened weight deltas when N << D: everything goes through the
// centered N x N Gram matrix, never an N x D copy.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lorascope/adapter.hpp"
#include "lorascope/stats.hpp"
#include "lorascope/types.hpp"

namespace lorascope {

struct PcaModel {
  std::vector<std::string> adapter_ids;
  /// N x C, column c = sqrt(lambda_c) * v_c with the largest-|entry|-positive sign rule.
  Matrix scores;
  Vector eigenvalues;  ///< of the centered Gram matrix, descending
  Vector explained_variance_ratio;
  /// -1 where the sign rule flipped the solver's eigenvector.
  std::vector<int> orientation;
  /// Shared so copies of the model do not duplicate a D-length vector.
  std::shared_ptr<const Vector> mean_vector_handle;
  std::string ordering_tag;
  int n = 0;
  int components() const { return static_cast<int>(scores.cols()); }
};

/// Uncentered Gram matrix of flat vectors; pair (i, j) is one 64-bit dot
/// product, evaluated in parallel but written to its own slot.
Matrix gram_matrix(std::span<const DeltaVector> vectors, unsigned threads = 1);

/// Same matrix from per-sublayer Frobenius inner products, without flattening.
Matrix gram_matrix(std::span<const AdapterDelta> deltas, unsigned threads = 1);

/// Eigen-decomposition of J G J (J = I - 11^T / N). Keeps components with
/// eigenvalue above a relative tolerance, at most N - 1.
PcaModel pca_from_gram(const Matrix& gram, std::vector<std::string> ids);

PcaModel pca_fit(std::span<const DeltaVector> vectors, unsigned threads = 1);
PcaModel pca_fit(std::span<const AdapterDelta> deltas, unsigned threads = 1);

struct OrientedAuc {
  double auc = 0.5;      ///< max(raw, 1 - raw)
  double raw_auc = 0.5;  ///< score as stored
  int orientation = 1;   ///< -1 when the component was negated
};

struct OrientedCorrelation {
  stats::Correlation correlation;  ///< rho >= 0 after orientation
  int orientation = 1;
};

OrientedAuc pc_objective_auc(const PcaModel& model, int component, std::span<const int> labels);
OrientedCorrelation pc_intensity_rho(const PcaModel& model, int component, std::span<const double> steps);

}  // namespace lorascope
