#pragma once

#include <cstddef>
#include <vector>

#include "hdiv/mat_core.hpp"
#include "hdiv/rng.hpp"

namespace hdiv {

// Lasso for   minimize ||g - W b||^2 / (2n) + lambda ||b||_1.
// No intercept: the data are assumed centred (the IV model is mean zero).

struct LassoOptions {
  /// Stop when the largest coordinate change of a full sweep is below this...
  double tol = 1e-7;
  /// ...and every KKT condition holds within this.
  double kkt_tol = 1e-6;
  std::size_t max_sweeps = 100000;
  /// Fit on columns scaled to unit mean square and map back. Off by default.
  bool standardize = false;
  /// Record the objective after every sweep in LassoFit::objective_trace.
  bool record_trace = false;
};

struct LassoFit {
  Vector coefficients;
  double lambda = 0.0;
  std::size_t iterations = 0;  ///< coordinate-descent sweeps
  bool converged = false;
  double objective = 0.0;
  std::vector<double> objective_trace;
};

/// Strictly decreasing, log-equispaced from lmax down to ratio * lmax.
class LambdaGrid {
 public:
  LambdaGrid() = default;
  explicit LambdaGrid(std::vector<double> values) : values_(std::move(values)) {}

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

struct CvOptions {
  std::size_t folds = 10;
  std::size_t grid_length = 100;
  double grid_ratio = 0.01;
  LassoOptions lasso;
};

struct CvReport {
  LambdaGrid grid;
  std::vector<double> cv_error;    ///< mean squared held-out error per grid point
  std::size_t chosen = 0;
  std::vector<std::size_t> fold_of;  ///< fold index of every observation
};

struct CvResult {
  CvReport report;
  LassoFit fit;
};

double soft_threshold(double z, double gamma);

/// ||W^T g / n||_inf: the smallest lambda with an all-zero solution.
double lambda_max(const Matrix& W, const Vector& g);

LambdaGrid lambda_grid(double lmax, std::size_t length = 100, double ratio = 0.01);

double lasso_objective(const Matrix& W, const Vector& g, const Vector& b, double lambda);

/// Cyclic coordinate descent started from `init`. Hitting max_sweeps does not
/// throw; the best iterate comes back with converged == false.
LassoFit fit_lasso(const Matrix& W, const Vector& g, double lambda, const Vector& init,
                   const LassoOptions& opts = {});

/// Warm-started solutions along `grid` (same order as the grid).
std::vector<LassoFit> lasso_path(const Matrix& W, const Vector& g, const LambdaGrid& grid,
                                 const LassoOptions& opts = {});

/// K-fold cross-validation over lambda_grid(lambda_max(W, g)), then a
/// warm-started refit on all rows at the minimiser (ties go to the larger
/// lambda). Folds are contiguous blocks of a seeded permutation.
/// If lambda_max is zero the report carries an empty grid and the fit is the
/// zero vector at lambda = 0.
CvResult cv_lasso(const Matrix& W, const Vector& g, Rng& rng, const CvOptions& opts = {});

/// True iff the KKT conditions of the lasso objective hold within `tol`.
bool kkt_check(const Matrix& W, const Vector& g, const Vector& b, double lambda, double tol);

/// Largest KKT violation (0 when b is exactly optimal).
double kkt_residual(const Matrix& W, const Vector& g, const Vector& b, double lambda);

}  // namespace hdiv
