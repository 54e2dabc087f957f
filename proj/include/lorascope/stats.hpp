// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lorascope::stats {

/// Scores with binary labels (1 = positive class).
struct ScoredLabels {
  std::vector<double> scores;
  std::vector<int> labels;
};

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
  int n_valid = 0;
  int n_requested = 0;
};

struct Correlation {
  double rho = 0.0;
  /// Two-sided, Student-t approximation with n - 2 degrees of freedom.
  double p_value = 1.0;
  int n = 0;
};

/// Mann-Whitney AUC: P(score+ > score-) + P(tie) / 2.
double auc(const ScoredLabels& data);
double auc(std::span<const double> scores, std::span<const int> labels);

/// Percentile bootstrap interval. Resamples with a single class are dropped
/// and not replaced. Resample i draws from its own seeded stream, so the
/// result is the same for any thread count.
ConfidenceInterval bootstrap_auc_ci(const ScoredLabels& data, int n_resamples, double level,
                                    std::uint64_t seed, unsigned threads = 1);

/// Average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);

/// Spearman rho with average ranks. Throws Error{degeneracy} for n < 3 or a
/// constant argument.
Correlation spearman(std::span<const double> x, std::span<const double> y);

/// Two-sided p-value of a correlation under the t approximation.
double correlation_p_value(double r, int n);

/// Linear-interpolation quantile (q in [0, 1]) of unsorted data.
double quantile(std::vector<double> values, double q);

}  // namespace lorascope::stats
