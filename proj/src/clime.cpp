#include "hdiv/clime.hpp"

#include <algorithm>
#include <string>

#include "hdiv/errors.hpp"
#include "hdiv/parallel.hpp"

namespace hdiv {

namespace {

void check_row(const GramMatrix& sigma, std::size_t j) {
  require_dims(sigma.sigma.rows() == sigma.sigma.cols(), "CLIME: Sigma must be square");
  if (j >= static_cast<std::size_t>(sigma.dim())) {
    throw Error(ErrorCode::InvalidArgument, "CLIME: row index " + std::to_string(j) + " out of range");
  }
}

}  // namespace

bool PrecisionEstimate::all_certified() const {
  return std::all_of(rows.begin(), rows.end(), [](const ClimeRow& r) { return r.certified(); });
}

double min_inf_residual(const GramMatrix& sigma, std::size_t j) {
  check_row(sigma, j);
  const Index p = sigma.dim();
  const Matrix& S = sigma.sigma;
  //  S(th+ - th-) - t 1 <=  e_j
  // -S(th+ - th-) - t 1 <= -e_j
  StandardLp lp{Matrix::Zero(2 * p, 2 * p + 1), Vector::Zero(2 * p), Vector::Zero(2 * p + 1)};
  lp.A.topLeftCorner(p, p) = S;
  lp.A.block(0, p, p, p) = -S;
  lp.A.bottomLeftCorner(p, p) = -S;
  lp.A.block(p, p, p, p) = S;
  lp.A.col(2 * p).setConstant(-1.0);
  lp.b[static_cast<Index>(j)] = 1.0;
  lp.b[p + static_cast<Index>(j)] = -1.0;
  lp.c[2 * p] = 1.0;
  // theta = 0, t = 1 is feasible: entering t on the violated row reaches it.
  lp.crash_pivots = {{p + static_cast<Index>(j), 2 * p}};

  const LpSolution sol = solve_standard_lp(lp);
  // The residual the LP point attains; any mu at or above it is feasible.
  const Vector theta = sol.x.head(p) - sol.x.segment(p, p);
  Vector residual = S * theta;
  residual[static_cast<Index>(j)] -= 1.0;
  return residual.cwiseAbs().maxCoeff();
}

ClimeRow solve_clime_row(const GramMatrix& sigma, std::size_t j, double mu) {
  check_row(sigma, j);
  if (!(mu >= 0.0)) throw Error(ErrorCode::InvalidArgument, "CLIME: mu must be >= 0");
  const Index p = sigma.dim();
  const Matrix& S = sigma.sigma;
  //  S(th+ - th-) <= e_j + mu
  // -S(th+ - th-) <= mu - e_j
  StandardLp lp{Matrix::Zero(2 * p, 2 * p), Vector::Constant(2 * p, mu), Vector::Ones(2 * p)};
  lp.A.topLeftCorner(p, p) = S;
  lp.A.topRightCorner(p, p) = -S;
  lp.A.bottomLeftCorner(p, p) = -S;
  lp.A.bottomRightCorner(p, p) = S;
  lp.b[static_cast<Index>(j)] += 1.0;
  lp.b[p + static_cast<Index>(j)] -= 1.0;

  LpSolution sol;
  try {
    sol = solve_standard_lp(lp);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Infeasible) {
      throw Error(ErrorCode::Infeasible, "CLIME row " + std::to_string(j) + ": mu=" + std::to_string(mu) +
                                             " is below the minimal attainable residual");
    }
    throw;
  }

  ClimeRow row;
  row.j = j;
  row.mu = mu;
  row.theta = sol.x.head(p) - sol.x.tail(p);
  Vector residual = S * row.theta;
  residual[static_cast<Index>(j)] -= 1.0;
  row.residual_inf = residual.cwiseAbs().maxCoeff();
  row.objective = row.theta.lpNorm<1>();
  return row;
}

PrecisionEstimate build_precision(const GramMatrix& sigma, const PrecisionOptions& opts) {
  require_dims(sigma.sigma.rows() == sigma.sigma.cols(), "CLIME: Sigma must be square");
  if (!opts.uniform_mu && !(opts.kappa > 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "CLIME: kappa must exceed 1");
  }
  const auto p = static_cast<std::size_t>(sigma.dim());
  PrecisionEstimate est;
  est.kappa = opts.kappa;
  est.rows.resize(p);
  if (!opts.uniform_mu) est.min_residuals.resize(p);

  std::vector<std::string> failures(p);
  parallel_for(p, opts.threads, [&](std::size_t j) {
    try {
      double mu;
      if (opts.uniform_mu) {
        mu = *opts.uniform_mu;
      } else {
        est.min_residuals[j] = min_inf_residual(sigma, j);
        mu = std::max(opts.kappa * est.min_residuals[j], kMuFloor);
      }
      est.rows[j] = solve_clime_row(sigma, j, mu);
    } catch (const Error& e) {
      failures[j] = e.what();
    }
  });

  std::string message;
  for (std::size_t j = 0; j < p; ++j) {
    if (!failures[j].empty()) message += "\n  row " + std::to_string(j) + ": " + failures[j];
  }
  if (!message.empty()) throw Error(ErrorCode::NumericalFailure, "CLIME rows failed:" + message);

  est.theta.resize(static_cast<Index>(p), static_cast<Index>(p));
  for (std::size_t j = 0; j < p; ++j) est.theta.row(static_cast<Index>(j)) = est.rows[j].theta.transpose();
  return est;
}

}  // namespace hdiv
