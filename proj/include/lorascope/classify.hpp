// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lorascope/features.hpp"
#include "lorascope/types.hpp"

namespace lorascope {

struct SplitPlan {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  double ratio = 0.7;
  std::uint64_t seed = 0;
  std::vector<std::string> strata;

  bool in_train(const std::string& id) const;
  bool in_test(const std::string& id) const;
  /// Keeps only ids in `ids`, preserving train/test membership.
  SplitPlan restrict_to(std::span<const std::string> ids) const;
};

/// Per stratum, floor(ratio * n) members (clamped to [1, n - 1]) go to
/// training after a seeded shuffle. Ids keep their input order within each
/// side of the plan.
SplitPlan stratified_split(std::span<const std::string> ids, std::span<const std::string> strata,
                           double ratio, std::uint64_t seed);

struct ClassifierModel {
  Vector weights;      ///< per standardized column; 0 for constant columns
  double bias = 0.0;
  Vector mean;         ///< training-row column means
  Vector scale;        ///< training-row column standard deviations (1 for constant columns)
  std::vector<bool> constant;
  double lambda = 1.0;
  std::vector<FeatureColumn> columns;

  int iterations = 0;
  double gradient_norm = 0.0;
  double objective = 0.0;

  /// Log-odds of the positive class.
  double decision(std::span<const double> row) const;
  double predict_proba(std::span<const double> row) const;
  Vector decision(const FeatureMatrix& m) const;
};

struct TrainOptions {
  double lambda = 1.0;
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
};

/// sum_i [log(1 + exp(t_i)) - y_i t_i] + lambda / 2 * |w|^2 with
/// t_i = b + z_i . w and y_i in {0, 1}; the bias is not penalized.
/// Optionally returns the gradient.
double logistic_objective(const Matrix& z, const Vector& y, const Vector& w, double b, double lambda,
                          Vector* grad_w = nullptr, double* grad_b = nullptr);

/// Fits on already standardized rows with a damped Newton method.
ClassifierModel fit_standardized(const Matrix& z, const Vector& y, const TrainOptions& options);

/// Standardizes on the training rows of `plan` only, then fits. `labels`
/// is indexed like the rows of `matrix`.
ClassifierModel train_logreg(const FeatureMatrix& matrix, std::span<const int> labels, const SplitPlan& plan,
                             const TrainOptions& options = {});

double sigmoid(double t);

struct FamilyImportance {
  /// Mean |weight| per family; absent when no column of that family exists.
  std::map<FeatureFamily, std::optional<double>> mean_abs_weight;
  /// ratio[a][b] = mean(a) / mean(b) when both present and mean(b) > 0.
  std::map<FeatureFamily, std::map<FeatureFamily, double>> ratio;
};

FamilyImportance feature_importance(const ClassifierModel& model);

std::string model_to_json(const ClassifierModel& model);
ClassifierModel model_from_json(std::string_view text);

}  // namespace lorascope
