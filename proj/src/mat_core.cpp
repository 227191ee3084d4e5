#include "hdiv/mat_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hdiv/errors.hpp"

namespace hdiv {

bool all_finite(const Matrix& m) {
  return m.allFinite();
}

SpdMatrix::SpdMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "SpdMatrix must be square");
  }
  if (!all_finite(m_)) {
    throw Error(ErrorCode::InvalidArgument, "SpdMatrix has non-finite entries");
  }
  const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
  for (Index j = 0; j < m_.cols(); ++j) {
    for (Index i = j + 1; i < m_.rows(); ++i) {
      if (std::abs(m_(i, j) - m_(j, i)) > kSymmetryTolerance * scale) {
        throw Error(ErrorCode::InvalidArgument, "SpdMatrix is not symmetric at (" +
                                                    std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
  Eigen::LLT<Matrix> llt(m_);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::NotPositiveDefinite, "Cholesky factorisation hit a nonpositive pivot");
  }
  chol_ = llt.matrixL();
}

Matrix mvnormal_sample(Rng& rng, const Matrix& chol, Index count) {
  require_dims(chol.rows() == chol.cols(), "mvnormal_sample: factor must be square");
  const Index dim = chol.rows();
  Matrix g(count, dim);
  for (Index i = 0; i < count; ++i) {
    for (Index k = 0; k < dim; ++k) g(i, k) = rng.normal();
  }
  return g * chol.transpose();
}

SpdMatrix toeplitz_sigma(Index p, double rho) {
  if (!(std::abs(rho) < 1.0)) {
    throw Error(ErrorCode::InvalidRho, "|rho| must be < 1, got " + std::to_string(rho));
  }
  if (p < 1) throw Error(ErrorCode::InvalidArgument, "toeplitz_sigma: p must be >= 1");
  Matrix m(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index k = 0; k < p; ++k) m(j, k) = std::pow(rho, static_cast<double>(std::abs(j - k)));
  }
  return SpdMatrix(std::move(m));
}

SpdMatrix circulant_sigma(Index p, Index band, double offval) {
  if (band < 0 || p <= 2 * band) {
    throw Error(ErrorCode::BandOverlap,
                "circulant_sigma needs p > 2 * band (p=" + std::to_string(p) + ", band=" + std::to_string(band) + ")");
  }
  Matrix m = Matrix::Identity(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) {
      const Index offset = k - j;
      if (offset <= band || offset >= p - band) {
        m(j, k) = offval;
        m(k, j) = offval;
      }
    }
  }
  return SpdMatrix(std::move(m));
}

}  // namespace hdiv
