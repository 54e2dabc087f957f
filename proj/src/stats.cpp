// SPDX-License-Identifier: Apache-2.0
#include "lorascope/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>

#include "lorascope/error.hpp"
#include "lorascope/parallel.hpp"
#include "lorascope/rng.hpp"

namespace lorascope::stats {

namespace {

struct PairCount {
  std::uint64_t doubled = 0;  ///< 2 * wins + ties
  std::uint64_t pairs = 0;    ///< n_pos * n_neg
};

PairCount count_pairs(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  PairCount pc;
  std::uint64_t neg_below = 0;
  std::uint64_t n_pos = 0;
  std::uint64_t n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t pos_here = 0, neg_here = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos_here : neg_here) += 1;
      ++j;
    }
    pc.doubled += pos_here * (2 * neg_below + neg_here);
    neg_below += neg_here;
    n_pos += pos_here;
    n_neg += neg_here;
    i = j;
  }
  pc.pairs = n_pos * n_neg;
  return pc;
}

double auc_from_counts(const PairCount& pc) {
  const double total = 2.0 * static_cast<double>(pc.pairs);
  const std::uint64_t complement = 2 * pc.pairs - pc.doubled;
  // Evaluating the smaller side keeps auc(s, y) + auc(s, 1 - y) == 1 exactly.
  if (pc.doubled <= complement) return static_cast<double>(pc.doubled) / total;
  return 1.0 - static_cast<double>(complement) / total;
}

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::schema, "scores and labels differ in length");
  if (scores.empty()) fail(ErrorKind::class_balance, "no scored examples");
  bool pos = false, neg = false;
  for (int l : labels) {
    if (l != 0 && l != 1) fail(ErrorKind::parameter, "labels must be 0 or 1");
    (l ? pos : neg) = true;
  }
  if (!pos || !neg) fail(ErrorKind::class_balance, "AUC needs both classes present");
  for (double s : scores)
    if (std::isnan(s)) fail(ErrorKind::numeric, "score is NaN");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  return auc_from_counts(count_pairs(scores, labels));
}

double auc(const ScoredLabels& data) { return auc(data.scores, data.labels); }

double quantile(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorKind::degeneracy, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

ConfidenceInterval bootstrap_auc_ci(const ScoredLabels& data, int n_resamples, double level,
                                    std::uint64_t seed, unsigned threads) {
  check_inputs(data.scores, data.labels);
  if (n_resamples < 1) fail(ErrorKind::parameter, "bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) fail(ErrorKind::parameter, "coverage level must be in (0, 1)");

  const std::size_t n = data.scores.size();
  std::vector<double> values(static_cast<std::size_t>(n_resamples), std::nan(""));
  parallel_for(values.size(), threads, [&](std::size_t r) {
    Rng rng = make_rng(seed, r);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> s(n);
    std::vector<int> l(n);
    int pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = pick(rng);
      s[i] = data.scores[j];
      l[i] = data.labels[j];
      pos += l[i];
    }
    if (pos == 0 || pos == static_cast<int>(n)) return;
    values[r] = auc_from_counts(count_pairs(s, l));
  });

  std::vector<double> valid;
  for (double v : values)
    if (!std::isnan(v)) valid.push_back(v);
  if (valid.empty()) fail(ErrorKind::degeneracy, "every bootstrap resample contained a single class");

  ConfidenceInterval ci;
  ci.n_requested = n_resamples;
  ci.n_valid = static_cast<int>(valid.size());
  const double tail = (1.0 - level) / 2.0;
  ci.low = quantile(valid, tail);
  ci.high = quantile(valid, 1.0 - tail);
  return ci;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of positions i+1 .. j
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::schema, "correlation inputs differ in length");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::degeneracy, "correlation of a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double correlation_p_value(double r, int n) {
  if (n < 3) return 1.0;
  const double df = n - 2;
  if (std::abs(r) >= 1.0) return 0.0;
  const double t2 = r * r * df / (1.0 - r * r);
  // Two-sided Student-t tail: I_{df / (df + t^2)}(df / 2, 1 / 2).
  Eigen::ArrayXd a(1), b(1), x(1);
  a << df / 2.0;
  b << 0.5;
  x << df / (df + t2);
  const Eigen::ArrayXd p = Eigen::betainc(a, b, x);
  return std::clamp(p(0), 0.0, 1.0);
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::schema, "spearman inputs differ in length");
  if (x.size() < 3) fail(ErrorKind::degeneracy, "spearman needs at least 3 pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  Correlation c;
  c.n = static_cast<int>(x.size());
  c.rho = pearson(rx, ry);
  c.p_value = correlation_p_value(c.rho, c.n);
  return c;
}

}  // namespace lorascope::stats
