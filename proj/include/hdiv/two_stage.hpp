#pragma once

#include <span>
#include <string>
#include <vector>

#include "hdiv/lasso.hpp"
#include "hdiv/mat_core.hpp"
#include "hdiv/rng.hpp"

namespace hdiv {

struct FirstStageFit {
  Matrix Ahat;  ///< p_z x p_x, column j regresses x^j on Z
  Matrix Dhat;  ///< n x p_x, Z * Ahat
  std::vector<LassoFit> fits;
  std::vector<double> lambdas;
};

/// Empirical Gram matrix D^T D / n. May be singular when p_x > n.
struct GramMatrix {
  Matrix sigma;
  std::string source = "Dhat";

  static GramMatrix from_matrix(Matrix m, std::string source);
  Index dim() const { return sigma.rows(); }
};

struct TwoStageFit {
  FirstStageFit first;
  CvResult second;
  GramMatrix gram;

  const Vector& beta_hat() const { return second.fit.coefficients; }
};

/// Stream used for column j of the first stage when the caller does not
/// supply one.
Rng first_stage_stream(const Rng& rng, std::size_t column);
Rng second_stage_stream(const Rng& rng);

/// One cross-validated lasso of x^j on Z per column, each with its own lambda
/// and fold assignment. Requires p_x <= p_z.
FirstStageFit fit_first_stage(const Matrix& Z, const Matrix& X, const Rng& rng,
                              const CvOptions& opts = {}, std::size_t threads = 1);

/// Same, with an explicit stream per column of X.
FirstStageFit fit_first_stage(const Matrix& Z, const Matrix& X, std::span<const Rng> column_streams,
                              const CvOptions& opts = {}, std::size_t threads = 1);

/// Exactly symmetric by construction.
GramMatrix gram(const Matrix& Dhat);

CvResult fit_second_stage(const Matrix& Dhat, const Vector& y, Rng& rng, const CvOptions& opts = {});

/// First stage, Gram matrix and second stage with streams derived from `rng`.
TwoStageFit fit_two_stage(const Matrix& Z, const Matrix& X, const Vector& y, const Rng& rng,
                          const CvOptions& opts = {}, std::size_t threads = 1);

}  // namespace hdiv
