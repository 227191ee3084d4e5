#include "hdiv/inference.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "hdiv/errors.hpp"

namespace hdiv {

std::string_view to_string(SeMode mode) {
  return mode == SeMode::Robust ? "robust" : "homoscedastic";
}

SeMode parse_se_mode(std::string_view text) {
  if (text == "robust") return SeMode::Robust;
  if (text == "homoscedastic") return SeMode::Homoscedastic;
  throw Error(ErrorCode::InvalidArgument, "unknown se mode '" + std::string(text) + "'");
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "normal_quantile needs 0 < p < 1");

  // Acklam (2003), relative error below 1.15e-9 before refinement.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // One Halley step on Phi(x) - p.
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double z_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
  return normal_quantile(1.0 - 0.5 * alpha);
}

Vector one_step_update(const Vector& beta_hat, const Matrix& theta, const Matrix& Dhat, const Matrix& X,
                       const Vector& y) {
  const Index n = X.rows();
  const Index p = X.cols();
  require_dims(y.size() == n && Dhat.rows() == n, "one_step_update: row counts differ");
  require_dims(Dhat.cols() == p && beta_hat.size() == p, "one_step_update: column counts differ");
  require_dims(theta.rows() == p && theta.cols() == p, "one_step_update: Theta must be p_x x p_x");
  const Vector residual = y - X * beta_hat;
  const Vector score = Dhat.transpose() * residual / static_cast<double>(n);
  return beta_hat + theta * score;
}

double sigma_u_hat(const Vector& y, const Matrix& X, const Vector& beta_hat) {
  require_dims(y.size() == X.rows() && beta_hat.size() == X.cols(), "sigma_u_hat: dimension mismatch");
  return std::sqrt((y - X * beta_hat).squaredNorm() / static_cast<double>(X.rows()));
}

double se_homoscedastic(double sigma_u, const Matrix& theta, std::size_t j) {
  const auto jj = static_cast<Index>(j);
  require_dims(jj < theta.rows() && jj < theta.cols(), "se_homoscedastic: index out of range");
  const double diag = theta(jj, jj);
  if (!(diag > 0.0)) {
    throw Error(ErrorCode::NonpositiveDiagonal,
                "precision diagonal " + std::to_string(j) + " is " + std::to_string(diag));
  }
  return std::sqrt(sigma_u * sigma_u * diag);
}

double se_robust(const Vector& y, const Matrix& X, const Vector& beta_hat, const Matrix& theta,
                 const Matrix& Dhat, std::size_t j) {
  const auto jj = static_cast<Index>(j);
  require_dims(y.size() == X.rows() && Dhat.rows() == X.rows(), "se_robust: row counts differ");
  require_dims(beta_hat.size() == X.cols() && theta.cols() == Dhat.cols() && jj < theta.rows(),
               "se_robust: column counts differ");
  const Vector residual = y - X * beta_hat;
  const Vector projection = Dhat * theta.row(jj).transpose();
  return std::sqrt(residual.cwiseProduct(projection).squaredNorm() / static_cast<double>(X.rows()));
}

std::pair<double, double> confidence_interval(double beta_db_j, double w_j, double alpha, std::size_t n) {
  if (!(w_j >= 0.0)) throw Error(ErrorCode::InvalidArgument, "standard error must be >= 0");
  if (n == 0) throw Error(ErrorCode::TooFewObservations, "confidence_interval needs n >= 1");
  const double half = z_alpha(alpha) * w_j / std::sqrt(static_cast<double>(n));
  return {beta_db_j - half, beta_db_j + half};
}

InferenceResult debiased_inference(const Vector& beta_hat, const Matrix& theta, const Matrix& Dhat,
                                   const Matrix& X, const Vector& y, double alpha, SeMode mode) {
  const double z = z_alpha(alpha);
  InferenceResult out;
  out.alpha = alpha;
  out.se_mode = mode;
  out.beta_db = one_step_update(beta_hat, theta, Dhat, X, y);
  const Index p = X.cols();
  const auto n = static_cast<std::size_t>(X.rows());
  const double root_n = std::sqrt(static_cast<double>(n));
  out.se.resize(p);
  out.ci_lower.resize(p);
  out.ci_upper.resize(p);
  const double sigma = mode == SeMode::Homoscedastic ? sigma_u_hat(y, X, beta_hat) : 0.0;
  for (Index j = 0; j < p; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    const double w = mode == SeMode::Robust ? se_robust(y, X, beta_hat, theta, Dhat, jj)
                                            : se_homoscedastic(sigma, theta, jj);
    out.se[j] = w / root_n;
    const double half = z * out.se[j];
    out.ci_lower[j] = out.beta_db[j] - half;
    out.ci_upper[j] = out.beta_db[j] + half;
  }
  return out;
}

Matrix population_precision(const Matrix& sigma_d) {
  require_dims(sigma_d.rows() == sigma_d.cols(), "population_precision: matrix must be square");
  const Eigen::LDLT<Matrix> ldlt(sigma_d);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw Error(ErrorCode::SingularPopulationGram, "population Gram matrix is not positive definite");
  }
  const Vector diag = ldlt.vectorD();
  if (diag.size() > 0 && diag.minCoeff() <= 1e-12 * std::max(1.0, diag.cwiseAbs().maxCoeff())) {
    throw Error(ErrorCode::SingularPopulationGram, "population Gram matrix is numerically singular");
  }
  return ldlt.solve(Matrix::Identity(sigma_d.rows(), sigma_d.cols()));
}

RemainderDiagnostics remainder_decomposition(const PopulationTruth& truth, const Vector& beta_hat,
                                             const Matrix& theta_hat, const Matrix& Dhat, const Matrix& X,
                                             const Vector& y) {
  const Index n = X.rows();
  const Index p = X.cols();
  require_dims(truth.D.rows() == n && truth.D.cols() == p && truth.u.size() == n, "remainder: truth has wrong shape");
  require_dims(truth.beta.size() == p && truth.theta.rows() == p && truth.theta.cols() == p,
               "remainder: truth has wrong shape");
  const double root_n = std::sqrt(static_cast<double>(n));

  RemainderDiagnostics out;
  const Vector beta_db = one_step_update(beta_hat, theta_hat, Dhat, X, y);
  out.scaled_error = root_n * (beta_db - truth.beta);

  const Vector Du = truth.D.transpose() * truth.u / root_n;
  const Vector delta = truth.beta - beta_hat;
  out.main_term = truth.theta * Du;
  out.rem1 = (theta_hat - truth.theta) * Du;
  out.rem2 = theta_hat * ((Dhat - truth.D).transpose() * truth.u) / root_n;
  out.rem3 = theta_hat * (Dhat.transpose() * ((X - Dhat) * delta)) / root_n;
  const Vector gram_delta = Dhat.transpose() * (Dhat * delta) / static_cast<double>(n);
  out.rem4 = root_n * (theta_hat * gram_delta - delta);

  const Vector gap = out.scaled_error - out.main_term - out.rem1 - out.rem2 - out.rem3 - out.rem4;
  out.reconstruction_gap = p > 0 ? gap.cwiseAbs().maxCoeff() : 0.0;
  return out;
}

}  // namespace hdiv
