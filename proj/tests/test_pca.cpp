// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "lorascope/error.hpp"
#include "lorascope/pca.hpp"
#include "test_util.hpp"

namespace lorascope {
namespace {

using testing::random_matrix;

std::vector<DeltaVector> as_vectors(const Matrix& x) {
  std::vector<DeltaVector> out;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out.push_back({"a" + std::to_string(i), x.row(i).transpose(), "tag"});
  return out;
}

// Direct PCA: eigenvectors of the D x D scatter matrix, scores = Xc W.
struct DirectPca {
  Vector eigenvalues;
  Matrix scores;
};

DirectPca direct_pca(const Matrix& x) {
  const Matrix xc = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Matrix> es(xc.transpose() * xc);
  DirectPca out;
  out.eigenvalues = es.eigenvalues().reverse();
  out.scores = xc * es.eigenvectors().rowwise().reverse();
  return out;
}

TEST(Pca, GramTrickMatchesDirectPca) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> nd(4, 12), dd(20, 200);
  for (int t = 0; t < 20; ++t) {
    const int n = nd(rng), d = dd(rng);
    // Anisotropic data so eigenvalues are well separated.
    Matrix x = random_matrix(n, d, rng);
    for (int j = 0; j < d; ++j) x.col(j) *= 1.0 + 3.0 * j / d;
    const PcaModel m = pca_fit(std::span<const DeltaVector>(as_vectors(x)));
    const DirectPca o = direct_pca(x);
    ASSERT_EQ(m.components(), n - 1);
    for (int c = 0; c < m.components(); ++c) {
      EXPECT_NEAR(m.eigenvalues(c), o.eigenvalues(c), 1e-8 * o.eigenvalues(0));
      const Vector a = m.scores.col(c), b = o.scores.col(c);
      const double err = std::min((a - b).norm(), (a + b).norm());
      EXPECT_LE(err, 1e-8 * (1 + b.norm())) << "n=" << n << " d=" << d << " c=" << c;
    }
    EXPECT_NEAR(m.explained_variance_ratio.sum(), 1.0, 1e-12);
  }
}

TEST(Pca, SignRuleAndMean) {
  std::mt19937_64 rng(4);
  const Matrix x = random_matrix(6, 30, rng);
  const PcaModel m = pca_fit(std::span<const DeltaVector>(as_vectors(x)));
  for (int c = 0; c < m.components(); ++c) {
    Eigen::Index arg = 0;
    m.scores.col(c).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(m.scores(arg, c), 0.0);
    EXPECT_NEAR(m.scores.col(c).sum(), 0.0, 1e-10);
  }
  ASSERT_TRUE(m.mean_vector_handle);
  EXPECT_LE((*m.mean_vector_handle - x.colwise().mean().transpose()).norm(), 1e-12);
}

TEST(Pca, SublayerGramEqualsFlatGram) {
  std::mt19937_64 rng(5);
  std::vector<AdapterDelta> deltas;
  std::vector<DeltaVector> flat;
  for (int i = 0; i < 5; ++i) {
    AdapterDelta d;
    d.adapter_id = "a" + std::to_string(i);
    d.deltas[{0, ModuleKind::query_projection}] = random_matrix(6, 4, rng);
    d.deltas[{0, ModuleKind::value_projection}] = random_matrix(6, 4, rng);
    flat.push_back(flatten_delta(d));
    deltas.push_back(d);
  }
  const Matrix g1 = gram_matrix(std::span<const AdapterDelta>(deltas), 1);
  const Matrix g2 = gram_matrix(std::span<const DeltaVector>(flat), 3);
  EXPECT_LE((g1 - g2).norm(), 1e-12 * g2.norm());
  EXPECT_EQ(gram_matrix(std::span<const DeltaVector>(flat), 1), g2);
}

TEST(Pca, MismatchedOrderingIsSchemaError) {
  std::vector<DeltaVector> v = {{"a", Vector::Ones(3), "t1"}, {"b", Vector::Zero(3), "t2"}, {"c", Vector::Ones(3), "t1"}};
  try {
    pca_fit(std::span<const DeltaVector>(v));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema);
  }
}

TEST(Pca, ObjectiveAucAndIntensityRhoAreOriented) {
  // Two clusters along axis 0; distinct intensities along axis 1 with equal
  // per-cluster sums, so the axes are uncorrelated.
  const double level[8] = {0, 1.5, 2, 3.5, 0.5, 1, 2.5, 3};
  Matrix x = Matrix::Zero(8, 5);
  std::vector<int> type;
  std::vector<double> steps;
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = (i < 4 ? -10.0 : 10.0);
    x(i, 1) = level[i];
    type.push_back(i < 4);
    steps.push_back(100.0 * level[i]);
  }
  const PcaModel m = pca_fit(std::span<const DeltaVector>(as_vectors(x)));
  const OrientedAuc a = pc_objective_auc(m, 0, type);
  EXPECT_EQ(a.auc, 1.0);
  EXPECT_EQ(a.raw_auc == 1.0 ? 1 : -1, a.orientation);
  const OrientedCorrelation r = pc_intensity_rho(m, 1, steps);
  EXPECT_NEAR(r.correlation.rho, 1.0, 1e-12);
  EXPECT_EQ(pc_objective_auc(m, 1, type).auc, 0.5);
}

}  // namespace
}  // namespace lorascope
