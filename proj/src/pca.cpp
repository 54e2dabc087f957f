// SPDX-License-Identifier: Apache-2.0
#include "lorascope/pca.hpp"

#include <limits>
#include <set>

#include "lorascope/error.hpp"
#include "lorascope/parallel.hpp"
#include "lorascope/spectral.hpp"

namespace lorascope {

namespace {

std::vector<std::pair<Eigen::Index, Eigen::Index>> upper_pairs(Eigen::Index n) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> p;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) p.emplace_back(i, j);
  return p;
}

void check_population(std::size_t n) {
  if (n < 3) fail(ErrorKind::population, "PCA needs at least 3 vectors, got " + std::to_string(n));
}

}  // namespace

Matrix gram_matrix(std::span<const DeltaVector> vectors, unsigned threads) {
  check_population(vectors.size());
  for (const auto& v : vectors) {
    if (v.ordering_tag != vectors[0].ordering_tag)
      fail(ErrorKind::schema, "delta vector '" + v.adapter_id + "' has ordering tag " + v.ordering_tag +
                                  ", expected " + vectors[0].ordering_tag);
    if (v.values.size() != vectors[0].values.size())
      fail(ErrorKind::schema, "delta vector '" + v.adapter_id + "' has a different length");
  }
  const auto n = static_cast<Eigen::Index>(vectors.size());
  const auto pairs = upper_pairs(n);
  Matrix g(n, n);
  parallel_for(pairs.size(), threads, [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    g(i, j) = g(j, i) = vectors[static_cast<std::size_t>(i)].values.dot(vectors[static_cast<std::size_t>(j)].values);
  });
  return g;
}

Matrix gram_matrix(std::span<const AdapterDelta> deltas, unsigned threads) {
  check_population(deltas.size());
  const auto schema = schema_of(deltas[0]);
  for (const auto& d : deltas)
    if (schema_of(d) != schema) fail(ErrorKind::schema, "delta '" + d.adapter_id + "' has a different schema");
  const auto n = static_cast<Eigen::Index>(deltas.size());
  const auto pairs = upper_pairs(n);
  Matrix g(n, n);
  parallel_for(pairs.size(), threads, [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    double s = 0.0;
    const auto& a = deltas[static_cast<std::size_t>(i)].deltas;
    const auto& b = deltas[static_cast<std::size_t>(j)].deltas;
    for (const auto& [key, m] : a) s += m.cwiseProduct(b.at(key)).sum();
    g(i, j) = g(j, i) = s;
  });
  return g;
}

PcaModel pca_from_gram(const Matrix& gram, std::vector<std::string> ids) {
  const Eigen::Index n = gram.rows();
  check_population(static_cast<std::size_t>(n));
  if (gram.cols() != n || static_cast<Eigen::Index>(ids.size()) != n)
    fail(ErrorKind::schema, "Gram matrix and id list disagree in size");
  if (!gram.allFinite()) fail(ErrorKind::numeric, "Gram matrix has non-finite entries");

  // J G J without forming J.
  const Vector row_mean = gram.rowwise().mean();
  const double all_mean = row_mean.mean();
  Matrix centered = gram;
  centered.colwise() -= row_mean;
  centered.rowwise() -= row_mean.transpose();
  centered.array() += all_mean;
  centered = 0.5 * (centered + centered.transpose());

  const Eigen::SelfAdjointEigenSolver<Matrix> eig(centered);
  if (eig.info() != Eigen::Success) fail(ErrorKind::numeric, "Gram eigendecomposition failed");
  const Vector values = eig.eigenvalues().reverse();
  const Matrix vectors = eig.eigenvectors().rowwise().reverse();
  const double total = centered.trace();

  const double tol = std::max(values(0), 0.0) * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * 16;
  Eigen::Index c = 0;
  while (c < n - 1 && values(c) > tol) ++c;

  PcaModel m;
  m.adapter_ids = std::move(ids);
  m.n = static_cast<int>(n);
  m.eigenvalues = values.head(c);
  m.explained_variance_ratio = total > 0 ? Vector(m.eigenvalues / total) : Vector::Zero(c);
  m.scores = vectors.leftCols(c);
  m.orientation.assign(static_cast<std::size_t>(c), 1);
  for (Eigen::Index j = 0; j < c; ++j) {
    Eigen::Index arg = 0;
    m.scores.col(j).cwiseAbs().maxCoeff(&arg);
    // Same tie rule as the singular-vector convention: lowest index wins.
    const double top = m.scores.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(m.scores(i, j)) == top) {
        arg = i;
        break;
      }
    if (m.scores(arg, j) < 0) {
      m.scores.col(j) *= -1.0;
      m.orientation[static_cast<std::size_t>(j)] = -1;
    }
    m.scores.col(j) *= std::sqrt(m.eigenvalues(j));
  }
  return m;
}

PcaModel pca_fit(std::span<const DeltaVector> vectors, unsigned threads) {
  const Matrix g = gram_matrix(vectors, threads);
  std::vector<std::string> ids;
  for (const auto& v : vectors) ids.push_back(v.adapter_id);
  PcaModel m = pca_from_gram(g, std::move(ids));
  // Mean accumulated in input order.
  Vector mean = Vector::Zero(vectors[0].values.size());
  for (const auto& v : vectors) mean += v.values;
  mean /= static_cast<double>(vectors.size());
  m.mean_vector_handle = std::make_shared<const Vector>(std::move(mean));
  m.ordering_tag = vectors[0].ordering_tag;
  return m;
}

PcaModel pca_fit(std::span<const AdapterDelta> deltas, unsigned threads) {
  const Matrix g = gram_matrix(deltas, threads);
  std::vector<std::string> ids;
  for (const auto& d : deltas) ids.push_back(d.adapter_id);
  PcaModel m = pca_from_gram(g, std::move(ids));
  const auto schema = schema_of(deltas[0]);
  Vector mean = Vector::Zero(static_cast<Eigen::Index>(flat_length(schema)));
  for (const auto& d : deltas) mean += flatten_delta(d, &schema).values;
  mean /= static_cast<double>(deltas.size());
  m.mean_vector_handle = std::make_shared<const Vector>(std::move(mean));
  m.ordering_tag = ordering_tag(schema);
  return m;
}

namespace {

std::span<const double> component_scores(const PcaModel& model, int component, std::size_t expected) {
  if (component < 0 || component >= model.components())
    fail(ErrorKind::parameter, "component " + std::to_string(component) + " outside [0, " +
                                   std::to_string(model.components()) + ")");
  if (expected != static_cast<std::size_t>(model.n))
    fail(ErrorKind::schema, "expected " + std::to_string(model.n) + " values, got " + std::to_string(expected));
  return {model.scores.col(component).data(), static_cast<std::size_t>(model.n)};
}

}  // namespace

OrientedAuc pc_objective_auc(const PcaModel& model, int component, std::span<const int> labels) {
  const auto scores = component_scores(model, component, labels.size());
  OrientedAuc out;
  out.raw_auc = stats::auc(scores, labels);
  out.orientation = out.raw_auc >= 0.5 ? 1 : -1;
  out.auc = out.orientation == 1 ? out.raw_auc : 1.0 - out.raw_auc;
  return out;
}

OrientedCorrelation pc_intensity_rho(const PcaModel& model, int component, std::span<const double> steps) {
  const auto scores = component_scores(model, component, steps.size());
  if (std::set<double>(steps.begin(), steps.end()).size() < 3)
    fail(ErrorKind::degeneracy, "intensity correlation needs at least 3 distinct levels");
  OrientedCorrelation out;
  out.correlation = stats::spearman(scores, steps);
  if (out.correlation.rho < 0) {
    out.correlation.rho = -out.correlation.rho;
    out.orientation = -1;
  }
  return out;
}

}  // namespace lorascope
