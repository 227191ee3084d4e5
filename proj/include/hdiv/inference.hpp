#pragma once

#include <cstddef>
#include <string_view>
#include <utility>

#include "hdiv/mat_core.hpp"

namespace hdiv {

enum class SeMode { Robust, Homoscedastic };

std::string_view to_string(SeMode mode);
SeMode parse_se_mode(std::string_view text);

/// Debiased estimates with per-coordinate standard errors and intervals.
///
/// `se` is reported on the estimate's own scale, se_j = w_j / sqrt(n), where
/// w_j is the scale of sqrt(n) (beta_db_j - beta_j). Intervals are
/// beta_db_j -/+ z * se_j with z = Phi^{-1}(1 - alpha / 2).
struct InferenceResult {
  Vector beta_db;
  Vector se;
  Vector ci_lower;
  Vector ci_upper;
  double alpha = 0.05;
  SeMode se_mode = SeMode::Robust;
};

/// Inverse standard normal CDF: Acklam's rational approximation refined by
/// one Halley step against erfc, good to about 1e-15 relative.
double normal_quantile(double p);

/// Phi^{-1}(1 - alpha / 2).
double z_alpha(double alpha);

/// beta_hat + Theta Dhat^T (y - X beta_hat) / n. The residual uses X.
Vector one_step_update(const Vector& beta_hat, const Matrix& theta, const Matrix& Dhat, const Matrix& X,
                       const Vector& y);

/// sqrt(||y - X beta_hat||^2 / n).
double sigma_u_hat(const Vector& y, const Matrix& X, const Vector& beta_hat);

/// w_j = sqrt(sigma_u^2 * Theta_jj). Throws NonpositiveDiagonal if Theta_jj <= 0.
double se_homoscedastic(double sigma_u, const Matrix& theta, std::size_t j);

/// w_j = sqrt( mean_i (y_i - x_i^T beta_hat)^2 <theta_j, dhat_i>^2 ).
double se_robust(const Vector& y, const Matrix& X, const Vector& beta_hat, const Matrix& theta,
                 const Matrix& Dhat, std::size_t j);

/// [beta_db_j -/+ z_alpha * w_j / sqrt(n)].
std::pair<double, double> confidence_interval(double beta_db_j, double w_j, double alpha, std::size_t n);

InferenceResult debiased_inference(const Vector& beta_hat, const Matrix& theta, const Matrix& Dhat,
                                   const Matrix& X, const Vector& y, double alpha = 0.05,
                                   SeMode mode = SeMode::Robust);

/// Exact finite-sample split of sqrt(n) (beta_db - beta):
///   main = Theta D^T u / sqrt(n)
///   rem1 = (Theta_hat - Theta) D^T u / sqrt(n)
///   rem2 = Theta_hat (Dhat - D)^T u / sqrt(n)
///   rem3 = Theta_hat Dhat^T (X - Dhat)(beta - beta_hat) / sqrt(n)
///   rem4 = sqrt(n) (Theta_hat Sigma_hat - I)(beta - beta_hat)
struct RemainderDiagnostics {
  Vector scaled_error;  ///< sqrt(n) (beta_db - beta)
  Vector main_term;
  Vector rem1, rem2, rem3, rem4;
  double reconstruction_gap = 0.0;
};

/// Quantities only a simulation knows.
struct PopulationTruth {
  Vector beta;
  Matrix theta;  ///< inverse of the population Gram matrix of D
  Matrix D;      ///< Z A
  Vector u;
};

/// Dense inverse of a population Gram matrix; SingularPopulationGram if it
/// is not numerically invertible.
Matrix population_precision(const Matrix& sigma_d);

RemainderDiagnostics remainder_decomposition(const PopulationTruth& truth, const Vector& beta_hat,
                                             const Matrix& theta_hat, const Matrix& Dhat, const Matrix& X,
                                             const Vector& y);

}  // namespace hdiv
