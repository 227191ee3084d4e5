#include "hdiv/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hdiv/errors.hpp"

namespace hdiv {

namespace {

constexpr double kTolFloor = 1e-15;

// Residual-updating cyclic coordinate descent on a fixed design.
class CoordinateDescent {
 public:
  CoordinateDescent(const Matrix& W, const Vector& g)
      : W_(W), g_(g), n_(static_cast<double>(W.rows())) {
    col_sq_ = W.colwise().squaredNorm().transpose() / n_;
  }

  LassoFit solve(double lambda, Vector b, const LassoOptions& opts) const {
    const Index p = W_.cols();
    Vector r = g_ - W_ * b;
    LassoFit fit;
    fit.lambda = lambda;
    double tol = opts.tol;
    std::vector<Index> active;
    active.reserve(static_cast<std::size_t>(p));

    auto record = [&] {
      if (opts.record_trace) fit.objective_trace.push_back(objective(r, b, lambda));
    };

    while (fit.iterations < opts.max_sweeps) {
      double max_delta = 0.0;
      for (Index j = 0; j < p; ++j) max_delta = std::max(max_delta, update(j, lambda, b, r));
      ++fit.iterations;
      record();

      if (max_delta < tol) {
        r = g_ - W_ * b;  // drop accumulated drift before certifying
        if (kkt_violation(r, b, lambda) <= opts.kkt_tol) {
          fit.converged = true;
          break;
        }
        tol = std::max(tol * 0.1, kTolFloor);
        continue;
      }

      active.clear();
      for (Index j = 0; j < p; ++j) {
        if (b[j] != 0.0) active.push_back(j);
      }
      Anderson anderson(active, lambda);
      anderson.push(b);
      while (fit.iterations < opts.max_sweeps) {
        double active_delta = 0.0;
        for (Index j : active) active_delta = std::max(active_delta, update(j, lambda, b, r));
        ++fit.iterations;
        record();
        if (active_delta < tol) break;
        if (anderson.push(b)) anderson.extrapolate(*this, b, r);
      }
    }
    fit.objective = objective(r, b, lambda);
    fit.coefficients = std::move(b);
    return fit;
  }

 private:
  double update(Index j, double lambda, Vector& b, Vector& r) const {
    const double sq = col_sq_[j];
    if (sq == 0.0) {
      const double old = b[j];
      b[j] = 0.0;
      return std::abs(old);
    }
    const double z = W_.col(j).dot(r) / n_ + sq * b[j];
    const double next = soft_threshold(z, lambda) / sq;
    const double delta = next - b[j];
    if (delta != 0.0) {
      r.noalias() -= delta * W_.col(j);
      b[j] = next;
    }
    return std::abs(delta);
  }

  double objective(const Vector& r, const Vector& b, double lambda) const {
    return r.squaredNorm() / (2.0 * n_) + lambda * b.lpNorm<1>();
  }

  double kkt_violation(const Vector& r, const Vector& b, double lambda) const {
    const Vector grad = W_.transpose() * r / n_;
    double worst = 0.0;
    for (Index j = 0; j < b.size(); ++j) {
      double v = std::max(std::abs(grad[j]) - lambda, 0.0);
      if (b[j] != 0.0) v = std::max(v, std::abs(grad[j] - lambda * (b[j] > 0 ? 1.0 : -1.0)));
      worst = std::max(worst, v);
    }
    return worst;
  }

  // Anderson extrapolation over the last few active-set sweeps. A proposal is
  // kept only if it lowers the objective, so descent is preserved.
  class Anderson {
   public:
    static constexpr Index kDepth = 5;

    Anderson(const std::vector<Index>& active, double lambda)
        : active_(active), lambda_(lambda), history_(static_cast<Index>(active.size()), kDepth + 1) {}

    // Returns true once kDepth + 1 iterates are stored.
    bool push(const Vector& b) {
      for (std::size_t k = 0; k < active_.size(); ++k) history_(static_cast<Index>(k), filled_) = b[active_[k]];
      return ++filled_ == kDepth + 1;
    }

    void extrapolate(const CoordinateDescent& cd, Vector& b, Vector& r) {
      filled_ = 0;
      if (active_.empty()) return;
      const Matrix diffs = history_.rightCols(kDepth) - history_.leftCols(kDepth);
      Matrix gram = diffs.transpose() * diffs;
      const double ridge = 1e-12 * std::max(gram.trace(), 1e-300);
      gram.diagonal().array() += ridge;
      const Vector z = gram.ldlt().solve(Vector::Ones(kDepth));
      const double total = z.sum();
      if (!z.allFinite() || total == 0.0) {
        push(b);
        return;
      }
      const Vector proposal = history_.rightCols(kDepth) * (z / total);
      Vector trial_b = b;
      for (std::size_t k = 0; k < active_.size(); ++k) trial_b[active_[k]] = proposal[static_cast<Index>(k)];
      Vector trial_r = cd.g_;
      for (std::size_t k = 0; k < active_.size(); ++k) {
        const Index j = active_[k];
        if (trial_b[j] != 0.0) trial_r.noalias() -= trial_b[j] * cd.W_.col(j);
      }
      if (cd.objective(trial_r, trial_b, lambda_) < cd.objective(r, b, lambda_)) {
        b = std::move(trial_b);
        r = std::move(trial_r);
      }
      push(b);
    }

   private:
    const std::vector<Index>& active_;
    double lambda_;
    Matrix history_;
    Index filled_ = 0;
  };

  const Matrix& W_;
  const Vector& g_;
  double n_;
  Vector col_sq_;
};

Vector column_scales(const Matrix& W) {
  Vector s = (W.colwise().squaredNorm().transpose() / static_cast<double>(W.rows())).cwiseSqrt();
  for (Index j = 0; j < s.size(); ++j) {
    if (s[j] == 0.0) s[j] = 1.0;
  }
  return s;
}

void check_inputs(const Matrix& W, const Vector& g) {
  require_dims(W.rows() == g.size(), "lasso: W has " + std::to_string(W.rows()) + " rows but g has " +
                                         std::to_string(g.size()) + " entries");
  if (W.rows() < 1) throw Error(ErrorCode::TooFewObservations, "lasso: no observations");
}

}  // namespace

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

double lambda_max(const Matrix& W, const Vector& g) {
  check_inputs(W, g);
  // Same per-column expression as the first coordinate update from zero, so
  // a fit at exactly lambda_max returns exact zeros.
  double best = 0.0;
  for (Index j = 0; j < W.cols(); ++j) {
    best = std::max(best, std::abs(W.col(j).dot(g) / static_cast<double>(W.rows())));
  }
  return best;
}

LambdaGrid lambda_grid(double lmax, std::size_t length, double ratio) {
  if (!(lmax > 0.0) || !std::isfinite(lmax) || length < 2 || !(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::InvalidGridSpec, "lambda_grid needs lmax > 0, length >= 2, 0 < ratio < 1");
  }
  std::vector<double> values(length);
  const double step = std::log(ratio) / static_cast<double>(length - 1);
  for (std::size_t i = 0; i < length; ++i) values[i] = lmax * std::exp(step * static_cast<double>(i));
  values.front() = lmax;
  values.back() = lmax * ratio;
  return LambdaGrid(std::move(values));
}

double lasso_objective(const Matrix& W, const Vector& g, const Vector& b, double lambda) {
  const Vector r = g - W * b;
  return r.squaredNorm() / (2.0 * static_cast<double>(W.rows())) + lambda * b.lpNorm<1>();
}

LassoFit fit_lasso(const Matrix& W, const Vector& g, double lambda, const Vector& init,
                   const LassoOptions& opts) {
  check_inputs(W, g);
  require_dims(init.size() == W.cols(), "fit_lasso: init has wrong length");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "fit_lasso: lambda must be >= 0");
  if (!opts.standardize) return CoordinateDescent(W, g).solve(lambda, init, opts);

  const Vector s = column_scales(W);
  const Matrix scaled = W * s.cwiseInverse().asDiagonal();
  LassoFit fit = CoordinateDescent(scaled, g).solve(lambda, init.cwiseProduct(s), opts);
  fit.coefficients = fit.coefficients.cwiseQuotient(s);
  return fit;
}

std::vector<LassoFit> lasso_path(const Matrix& W, const Vector& g, const LambdaGrid& grid,
                                 const LassoOptions& opts) {
  check_inputs(W, g);
  std::vector<LassoFit> path;
  path.reserve(grid.size());
  const Vector s = opts.standardize ? column_scales(W) : Vector::Ones(W.cols());
  const Matrix scaled = opts.standardize ? Matrix(W * s.cwiseInverse().asDiagonal()) : Matrix();
  const CoordinateDescent cd(opts.standardize ? scaled : W, g);
  Vector warm = Vector::Zero(W.cols());
  for (double lambda : grid.values()) {
    LassoFit fit = cd.solve(lambda, warm, opts);
    warm = fit.coefficients;
    if (opts.standardize) fit.coefficients = fit.coefficients.cwiseQuotient(s);
    path.push_back(std::move(fit));
  }
  return path;
}

CvResult cv_lasso(const Matrix& W, const Vector& g, Rng& rng, const CvOptions& opts) {
  check_inputs(W, g);
  const auto n = static_cast<std::size_t>(W.rows());
  if (opts.folds < 2 || n < opts.folds) {
    throw Error(ErrorCode::TooFewObservations,
                "cv_lasso needs n >= folds >= 2 (n=" + std::to_string(n) + ", folds=" + std::to_string(opts.folds) + ")");
  }

  CvResult result;
  CvReport& report = result.report;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  report.fold_of.assign(n, 0);
  for (std::size_t k = 0; k < n; ++k) report.fold_of[order[k]] = k * opts.folds / n;

  const double lmax = lambda_max(W, g);
  if (lmax == 0.0) {
    result.fit.coefficients = Vector::Zero(W.cols());
    result.fit.converged = true;
    result.fit.objective = g.squaredNorm() / (2.0 * static_cast<double>(n));
    return result;
  }
  report.grid = lambda_grid(lmax, opts.grid_length, opts.grid_ratio);
  const std::size_t L = report.grid.size();

  std::vector<double> sq_error(L, 0.0);
  for (std::size_t fold = 0; fold < opts.folds; ++fold) {
    std::vector<Index> train, test;
    for (std::size_t i = 0; i < n; ++i) {
      (report.fold_of[i] == fold ? test : train).push_back(static_cast<Index>(i));
    }
    const Matrix W_train = W(train, Eigen::all);
    const Vector g_train = g(train);
    const Matrix W_test = W(test, Eigen::all);
    const Vector g_test = g(test);
    const auto path = lasso_path(W_train, g_train, report.grid, opts.lasso);
    for (std::size_t l = 0; l < L; ++l) {
      sq_error[l] += (g_test - W_test * path[l].coefficients).squaredNorm();
    }
  }

  report.cv_error.resize(L);
  for (std::size_t l = 0; l < L; ++l) report.cv_error[l] = sq_error[l] / static_cast<double>(n);
  report.chosen = 0;
  for (std::size_t l = 1; l < L; ++l) {
    if (report.cv_error[l] < report.cv_error[report.chosen]) report.chosen = l;
  }

  const LambdaGrid head(std::vector<double>(report.grid.values().begin(),
                                            report.grid.values().begin() + static_cast<std::ptrdiff_t>(report.chosen) + 1));
  auto path = lasso_path(W, g, head, opts.lasso);
  result.fit = std::move(path.back());
  return result;
}

double kkt_residual(const Matrix& W, const Vector& g, const Vector& b, double lambda) {
  check_inputs(W, g);
  require_dims(b.size() == W.cols(), "kkt_residual: b has wrong length");
  const Vector grad = W.transpose() * (g - W * b) / static_cast<double>(W.rows());
  double worst = 0.0;
  for (Index j = 0; j < b.size(); ++j) {
    worst = std::max(worst, std::abs(grad[j]) - lambda);
    if (b[j] != 0.0) worst = std::max(worst, std::abs(grad[j] - lambda * (b[j] > 0 ? 1.0 : -1.0)));
  }
  return std::max(worst, 0.0);
}

bool kkt_check(const Matrix& W, const Vector& g, const Vector& b, double lambda, double tol) {
  return kkt_residual(W, g, b, lambda) <= tol;
}

}  // namespace hdiv
