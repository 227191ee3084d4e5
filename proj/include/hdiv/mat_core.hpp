#pragma once

#include <Eigen/Dense>

#include <cstddef>

#include "hdiv/rng.hpp"

namespace hdiv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Relative tolerance used for the symmetry check of SpdMatrix.
inline constexpr double kSymmetryTolerance = 1e-12;

bool all_finite(const Matrix& m);

/// Symmetric positive-definite matrix with its lower Cholesky factor.
///
/// Construction validates finiteness, squareness and symmetry (within
/// kSymmetryTolerance relative to the largest entry) and factorises; a
/// failed factorisation throws NotPositiveDefinite. Immutable afterwards, so
/// it can be shared freely across threads.
class SpdMatrix {
 public:
  explicit SpdMatrix(Matrix m);

  const Matrix& matrix() const { return m_; }
  const Matrix& cholesky_factor() const { return chol_; }
  Index dim() const { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

 private:
  Matrix m_;
  Matrix chol_;
};

/// Lower-triangular L with L * L^T == m.
inline const Matrix& cholesky(const SpdMatrix& m) { return m.cholesky_factor(); }

/// `count` independent rows z = L g with g standard normal. The normals are
/// drawn row by row, coordinate by coordinate.
Matrix mvnormal_sample(Rng& rng, const Matrix& chol, Index count);

/// Entry (j, k) = rho^|j - k|.
SpdMatrix toeplitz_sigma(Index p, double rho);

/// Symmetric circulant: 1 on the diagonal, `offval` at circular distance
/// 1..band, 0 elsewhere. Requires p > 2 * band.
SpdMatrix circulant_sigma(Index p, Index band = 5, double offval = 0.1);

}  // namespace hdiv
