#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "hdiv/lp.hpp"
#include "hdiv/mat_core.hpp"
#include "hdiv/two_stage.hpp"

namespace hdiv {

/// Slack allowed on the feasibility certificate of a row.
inline constexpr double kClimeCertificateSlack = 1e-8;
/// Tolerance used when the row system is exactly solvable.
inline constexpr double kMuFloor = 1e-10;

struct ClimeRow {
  std::size_t j = 0;
  Vector theta;
  double mu = 0.0;
  double residual_inf = 0.0;  ///< ||Sigma theta - e_j||_inf as achieved
  double objective = 0.0;     ///< ||theta||_1

  bool certified() const { return residual_inf <= mu + kClimeCertificateSlack; }
};

/// Row-wise estimate; `theta` holds the raw row solutions, never symmetrised.
struct PrecisionEstimate {
  Matrix theta;
  std::vector<ClimeRow> rows;
  std::vector<double> min_residuals;  ///< per-row Chebyshev optimum (empty with a uniform mu)
  double kappa = 0.0;

  bool all_certified() const;
};

/// min_theta ||Sigma theta - e_j||_inf, as an LP in (theta+, theta-, t).
double min_inf_residual(const GramMatrix& sigma, std::size_t j);

/// minimize ||theta||_1  subject to  ||Sigma theta - e_j||_inf <= mu.
/// Throws Infeasible if mu is below min_inf_residual(sigma, j).
ClimeRow solve_clime_row(const GramMatrix& sigma, std::size_t j, double mu);

struct PrecisionOptions {
  double kappa = 1.2;
  /// Use this tolerance for every row instead of kappa * min residual.
  std::optional<double> uniform_mu;
  std::size_t threads = 1;
};

/// Row j uses mu_j = max(kappa * min_inf_residual(sigma, j), kMuFloor).
PrecisionEstimate build_precision(const GramMatrix& sigma, const PrecisionOptions& opts = {});

}  // namespace hdiv
