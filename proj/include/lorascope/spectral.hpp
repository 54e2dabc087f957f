// SPDX-License-Identifier: Apache-2.0
#pragma once

// Singular value decomposition of weight deltas and the spectral summaries
// computed from it. Everything here is templated on the Eigen scalar and
// accepts arbitrary dense expressions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "lorascope/error.hpp"

namespace lorascope {

/// Threshold on sigma_1 below which a delta counts as degenerate (zero).
inline constexpr double kDegenerateSigma = 1e-12;

template <typename Scalar>
struct SvdResult {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  MatrixType u;      ///< d x p, orthonormal columns
  VectorType sigma;  ///< p values, non-increasing
  MatrixType v;      ///< k x p, orthonormal columns

  Eigen::Index size() const { return sigma.size(); }

  /// Count of singular values that are exactly nonzero after truncation.
  Eigen::Index numerical_rank() const {
    return static_cast<Eigen::Index>((sigma.array() > Scalar(0)).count());
  }

  MatrixType reconstruct() const { return u * sigma.asDiagonal() * v.transpose(); }
};

/// Flips each column pair (u_i, v_i) so the largest-magnitude entry of u_i is
/// positive. Ties go to the lowest index.
template <typename DerivedU, typename DerivedV>
void fix_singular_vector_signs(Eigen::MatrixBase<DerivedU>& u, Eigen::MatrixBase<DerivedV>& v) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index arg = 0;
    u.col(j).cwiseAbs().maxCoeff(&arg);
    if (u(arg, j) < 0) {
      u.col(j) *= -1;
      if (j < v.cols()) v.col(j) *= -1;
    }
  }
}

/// Same rule applied to the columns of a single matrix.
template <typename Derived>
void fix_column_signs(Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    Eigen::Index arg = 0;
    m.col(j).cwiseAbs().maxCoeff(&arg);
    if (m(arg, j) < 0) m.col(j) *= -1;
  }
}

/// Thin SVD with sign-fixed singular vectors. Singular values at or below
/// max(d, k) * eps * sigma_1 are set to exactly zero.
template <typename Derived>
SvdResult<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& delta) {
  using Scalar = typename Derived::Scalar;
  using MatrixType = typename SvdResult<Scalar>::MatrixType;
  const MatrixType m = delta;
  if (!m.allFinite()) fail(ErrorKind::numeric, "svd input has non-finite entries");

  SvdResult<Scalar> out;
  if (m.size() == 0) {
    out.u.resize(m.rows(), 0);
    out.v.resize(m.cols(), 0);
    out.sigma.resize(0);
    return out;
  }
  Eigen::BDCSVD<MatrixType> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) fail(ErrorKind::numeric, "svd did not converge");
  out.u = solver.matrixU();
  out.v = solver.matrixV();
  out.sigma = solver.singularValues();

  const Scalar cutoff = Scalar(std::max(m.rows(), m.cols())) * std::numeric_limits<Scalar>::epsilon() *
                        (out.sigma.size() > 0 ? out.sigma(0) : Scalar(0));
  for (Eigen::Index i = 0; i < out.sigma.size(); ++i)
    if (out.sigma(i) <= cutoff) out.sigma(i) = Scalar(0);

  fix_singular_vector_signs(out.u, out.v);
  return out;
}

template <typename Scalar>
struct MagnitudeFeatures {
  Scalar frobenius_norm{};
  Scalar spectral_norm{};
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> top_singular_values;
};

template <typename Scalar>
MagnitudeFeatures<Scalar> magnitude_features(const SvdResult<Scalar>& s, Eigen::Index k) {
  if (k < 1 || k > s.size())
    fail(ErrorKind::parameter, "top-k count " + std::to_string(k) + " outside [1, " +
                                   std::to_string(s.size()) + "]");
  MagnitudeFeatures<Scalar> out;
  out.frobenius_norm = s.sigma.norm();
  out.spectral_norm = s.sigma(0);
  out.top_singular_values = s.sigma.head(k);
  return out;
}

template <typename Scalar>
struct ShapeFeatures {
  Scalar stable_rank{};
  Scalar sv_entropy{};  ///< nats
  Scalar concentration{};
  Scalar effective_rank{};
  bool degenerate = false;
};

/// Stable rank ||W||_F^2 / sigma_1^2, entropy of sigma / sum(sigma), its
/// exponential, and the variance fraction sigma_1^2 / sum(sigma^2).
/// A delta with sigma_1 < kDegenerateSigma yields zeros and the flag.
template <typename Scalar>
ShapeFeatures<Scalar> shape_features(const SvdResult<Scalar>& s) {
  ShapeFeatures<Scalar> out;
  if (s.size() == 0 || !(s.sigma(0) >= Scalar(kDegenerateSigma))) {
    out.degenerate = true;
    return out;
  }
  const Scalar s1 = s.sigma(0);
  const Scalar energy = s.sigma.squaredNorm();
  out.stable_rank = energy / (s1 * s1);
  out.concentration = (s1 * s1) / energy;

  const Scalar total = s.sigma.sum();
  Scalar h(0);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const Scalar p = s.sigma(i) / total;
    if (p > Scalar(0)) h -= p * std::log(p);
  }
  out.sv_entropy = std::max(h, Scalar(0));
  out.effective_rank = std::exp(out.sv_entropy);
  return out;
}

/// cos(u_i, c_i) for i < k, where c_i are the reference left vectors. Entries
/// whose own singular value or reference singular value is zero are 0.
template <typename Scalar, typename DerivedC, typename DerivedS>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> centroid_cosines(const SvdResult<Scalar>& s,
                                                          const Eigen::MatrixBase<DerivedC>& reference,
                                                          const Eigen::MatrixBase<DerivedS>& reference_sigma,
                                                          Eigen::Index k) {
  if (reference.rows() != s.u.rows())
    fail(ErrorKind::schema, "reference vectors have dimension " + std::to_string(reference.rows()) +
                                ", delta has " + std::to_string(s.u.rows()));
  if (k > reference.cols() || k > s.size())
    fail(ErrorKind::parameter, "top-k count " + std::to_string(k) + " exceeds available singular vectors");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(s.sigma(i) > Scalar(0)) || !(reference_sigma(i) > Scalar(0))) continue;
    const Scalar nu = s.u.col(i).norm();
    const Scalar nc = reference.col(i).norm();
    if (nu == Scalar(0) || nc == Scalar(0)) continue;
    out(i) = std::clamp(s.u.col(i).dot(reference.col(i)) / (nu * nc), Scalar(-1), Scalar(1));
  }
  return out;
}

/// max over i < k of |cos(normal, u_i)|.
template <typename Scalar, typename DerivedN>
Scalar alignment_score(const Eigen::MatrixBase<DerivedN>& normal, const SvdResult<Scalar>& s,
                       Eigen::Index k) {
  if (normal.size() != s.u.rows())
    fail(ErrorKind::schema, "probe normal has dimension " + std::to_string(normal.size()) +
                                ", singular vectors have " + std::to_string(s.u.rows()));
  if (k < 1 || k > s.size())
    fail(ErrorKind::parameter, "top-k count " + std::to_string(k) + " outside [1, " +
                                   std::to_string(s.size()) + "]");
  const Scalar nn = normal.norm();
  if (nn == Scalar(0)) fail(ErrorKind::parameter, "probe normal is the zero vector");
  Scalar best(0);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Scalar nu = s.u.col(i).norm();
    if (nu == Scalar(0)) continue;
    best = std::max(best, std::abs(normal.dot(s.u.col(i))) / (nn * nu));
  }
  return std::min(best, Scalar(1));
}

}  // namespace lorascope
