#include "hdiv/lp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hdiv/errors.hpp"

namespace hdiv {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kFeasTol = 1e-9;
constexpr double kCostPerturbation = 1e-7;
constexpr std::size_t kDegenerateStreakBeforeBland = 50;

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

// Dictionary form, one row per basic variable:
//   x_B(i) + sum_j T(i, j) x_N(j) = T(i, n).
// Row m holds the working (perturbed) costs and row m + 1 the true costs, in
// the same form with -z as the "basic variable": z = -T(c, n) + sum_j T(c, j) x_N(j).
// Variable ids 0..n-1 are structural, n..n+m-1 are slacks.
class Tableau {
 public:
  explicit Tableau(const StandardLp& lp)
      : m_(static_cast<std::size_t>(lp.A.rows())),
        n_(static_cast<std::size_t>(lp.A.cols())),
        width_(n_ + 1),
        data_((m_ + 2) * width_, 0.0),
        basic_(m_),
        nonbasic_(n_) {
    double cost_scale = 1.0;
    for (std::size_t j = 0; j < n_; ++j) cost_scale = std::max(cost_scale, std::abs(lp.c[static_cast<Index>(j)]));
    for (std::size_t i = 0; i < m_; ++i) {
      double* r = row(i);
      for (std::size_t j = 0; j < n_; ++j) r[j] = lp.A(static_cast<Index>(i), static_cast<Index>(j));
      r[n_] = lp.b[static_cast<Index>(i)];
      basic_[i] = n_ + i;
    }
    for (std::size_t j = 0; j < n_; ++j) {
      nonbasic_[j] = j;
      const double c = lp.c[static_cast<Index>(j)];
      // Deterministic, distinct perturbations break dual degeneracy.
      const double frac = std::fmod(0.6180339887498949 * static_cast<double>(j + 1), 1.0);
      row(m_)[j] = std::max(c, 0.0) + kCostPerturbation * cost_scale * (1.0 + frac);
      row(m_ + 1)[j] = c;
    }
    opt_tol_ = 1e-11 * cost_scale;
  }

  Status dual_simplex(std::size_t max_iter) {
    const double* d = row(m_);
    for (; iterations_ < max_iter; ++iterations_) {
      std::size_t r = m_;
      double most_negative = -kFeasTol;
      for (std::size_t i = 0; i < m_; ++i) {
        const double v = row(i)[n_];
        if (v < most_negative) {
          most_negative = v;
          r = i;
        }
      }
      if (r == m_) return Status::Optimal;
      const double* pr = row(r);
      std::size_t s = n_;
      double best = 0.0, best_pivot = 0.0;
      for (std::size_t j = 0; j < n_; ++j) {
        const double a = pr[j];
        if (a >= -kPivotTol) continue;
        const double ratio = std::max(d[j], 0.0) / -a;
        if (s == n_ || ratio < best - 1e-12 * (1.0 + best) ||
            (ratio <= best + 1e-12 * (1.0 + best) && -a > best_pivot)) {
          s = j;
          best = ratio;
          best_pivot = -a;
        }
      }
      if (s == n_) return Status::Infeasible;
      pivot(r, s);
    }
    return Status::IterationLimit;
  }

  Status primal_simplex(std::size_t max_iter) {
    const double* d = row(m_ + 1);
    std::size_t degenerate_streak = 0;
    bool bland = false;
    for (; iterations_ < max_iter; ++iterations_) {
      std::size_t s = n_;
      double most_negative = -opt_tol_;
      for (std::size_t j = 0; j < n_; ++j) {
        if (d[j] >= -opt_tol_) continue;
        if (bland) {
          if (s == n_ || nonbasic_[j] < nonbasic_[s]) s = j;
        } else if (d[j] < most_negative) {
          most_negative = d[j];
          s = j;
        }
      }
      if (s == n_) return Status::Optimal;

      std::size_t r = m_;
      double best = 0.0, best_pivot = 0.0;
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = row(i)[s];
        if (a <= kPivotTol) continue;
        const double ratio = std::max(row(i)[n_], 0.0) / a;
        const bool tie = r != m_ && ratio <= best + 1e-12 * (1.0 + best);
        if (r == m_ || ratio < best - 1e-12 * (1.0 + best) ||
            (tie && (bland ? basic_[i] < basic_[r] : a > best_pivot))) {
          r = i;
          best = ratio;
          best_pivot = a;
        }
      }
      if (r == m_) return Status::Unbounded;
      degenerate_streak = best <= 1e-14 ? degenerate_streak + 1 : 0;
      if (degenerate_streak > kDegenerateStreakBeforeBland) bland = true;
      pivot(r, s);
    }
    return Status::IterationLimit;
  }

  void crash(std::size_t r, std::size_t s) {
    pivot(r, s);
    ++iterations_;
  }

  std::size_t iterations() const { return iterations_; }
  const std::vector<std::size_t>& basic() const { return basic_; }
  double rhs(std::size_t i) const { return data_[i * width_ + n_]; }

 private:
  double* row(std::size_t i) { return data_.data() + i * width_; }
  const double* row(std::size_t i) const { return data_.data() + i * width_; }

  void pivot(std::size_t r, std::size_t s) {
    double* pr = row(r);
    const double inv = 1.0 / pr[s];
    nz_.clear();
    for (std::size_t j = 0; j <= n_; ++j) {
      if (j == s) continue;
      pr[j] *= inv;
      if (pr[j] != 0.0) nz_.push_back(j);
    }
    pr[s] = inv;
    for (std::size_t i = 0; i < m_ + 2; ++i) {
      if (i == r) continue;
      double* ri = row(i);
      const double f = ri[s];
      if (f == 0.0) continue;
      for (std::size_t j : nz_) ri[j] -= f * pr[j];
      ri[s] = -f * inv;
    }
    std::swap(basic_[r], nonbasic_[s]);
  }

  std::size_t m_, n_, width_;
  std::vector<double> data_;
  std::vector<std::size_t> basic_, nonbasic_;
  std::vector<std::size_t> nz_;
  double opt_tol_ = 1e-11;
  std::size_t iterations_ = 0;
};

// Recompute the basic solution from the original data.
Vector basic_solution(const StandardLp& lp, const Tableau& t) {
  const Index m = lp.A.rows();
  const Index n = lp.A.cols();
  const auto& basic = t.basic();
  Vector tableau_values(m);
  for (Index i = 0; i < m; ++i) tableau_values[i] = t.rhs(static_cast<std::size_t>(i));

  Vector x = Vector::Zero(n);
  Vector chosen = tableau_values;
  if (m > 0) {
    Matrix B = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      const auto id = static_cast<Index>(basic[static_cast<std::size_t>(i)]);
      if (id < n) {
        B.col(i) = lp.A.col(id);
      } else {
        B(id - n, i) = 1.0;
      }
    }
    const Eigen::PartialPivLU<Matrix> lu(B);
    const Vector polished = lu.solve(lp.b);
    const double scale = 1.0 + tableau_values.cwiseAbs().maxCoeff();
    if (polished.allFinite() && (polished - tableau_values).cwiseAbs().maxCoeff() <= 1e-6 * scale) {
      chosen = polished;
    }
  }
  for (Index i = 0; i < m; ++i) {
    const auto id = static_cast<Index>(basic[static_cast<std::size_t>(i)]);
    if (id < n) x[id] = std::max(chosen[i], 0.0);
  }
  return x;
}

}  // namespace

LpSolution solve_standard_lp(const StandardLp& lp) {
  const Index m = lp.A.rows();
  const Index n = lp.A.cols();
  require_dims(lp.b.size() == m && lp.c.size() == n, "solve_standard_lp: inconsistent dimensions");
  if (!lp.A.allFinite() || !lp.b.allFinite() || !lp.c.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "solve_standard_lp: non-finite data");
  }

  Tableau t(lp);
  for (const auto& [r, s] : lp.crash_pivots) t.crash(static_cast<std::size_t>(r), static_cast<std::size_t>(s));
  const std::size_t max_iter = 100 * static_cast<std::size_t>(m + n) + 1000;
  Status status = t.dual_simplex(max_iter);
  if (status == Status::Infeasible) throw Error(ErrorCode::Infeasible, "LP has no feasible point");
  if (status == Status::IterationLimit) throw Error(ErrorCode::NumericalFailure, "LP feasibility phase did not terminate");
  status = t.primal_simplex(max_iter);
  if (status == Status::Unbounded) throw Error(ErrorCode::Unbounded, "LP objective is unbounded below");
  if (status == Status::IterationLimit) throw Error(ErrorCode::NumericalFailure, "LP optimality phase did not terminate");

  LpSolution sol;
  sol.x = basic_solution(lp, t);
  sol.value = lp.c.dot(sol.x);
  sol.iterations = t.iterations();

  const double b_scale = 1.0 + (m > 0 ? lp.b.cwiseAbs().maxCoeff() : 0.0);
  const double violation = m > 0 ? (lp.A * sol.x - lp.b).maxCoeff() : 0.0;
  if (violation > 1e-7 * b_scale) {
    throw Error(ErrorCode::NumericalFailure, "LP solution violates constraints by " + std::to_string(violation));
  }
  return sol;
}

LpSolution solve_lp(const LpProblem& problem) {
  const Index m = problem.constraints.rows();
  const Index n = problem.constraints.cols();
  require_dims(problem.objective.size() == n, "solve_lp: objective length differs from column count");
  require_dims(problem.rhs.size() == m, "solve_lp: rhs length differs from row count");
  require_dims(problem.senses.size() == static_cast<std::size_t>(m), "solve_lp: one sense per row required");
  require_dims(problem.nonnegative.empty() || problem.nonnegative.size() == static_cast<std::size_t>(n),
               "solve_lp: one sign flag per variable required");

  auto nonneg = [&](Index j) {
    return problem.nonnegative.empty() || problem.nonnegative[static_cast<std::size_t>(j)];
  };

  // Column map: every variable gets a positive part; free ones also a negative part.
  std::vector<Index> neg_col(static_cast<std::size_t>(n), -1);
  Index cols = n;
  for (Index j = 0; j < n; ++j) {
    if (!nonneg(j)) neg_col[static_cast<std::size_t>(j)] = cols++;
  }
  Index rows = 0;
  for (Sense s : problem.senses) rows += s == Sense::Equal ? 2 : 1;

  StandardLp lp{Matrix::Zero(rows, cols), Vector::Zero(rows), Vector::Zero(cols)};
  for (Index j = 0; j < n; ++j) {
    lp.c[j] = problem.objective[j];
    if (const Index k = neg_col[static_cast<std::size_t>(j)]; k >= 0) lp.c[k] = -problem.objective[j];
  }
  Index out = 0;
  auto emit = [&](Index i, double sign) {
    for (Index j = 0; j < n; ++j) {
      const double a = sign * problem.constraints(i, j);
      lp.A(out, j) = a;
      if (const Index k = neg_col[static_cast<std::size_t>(j)]; k >= 0) lp.A(out, k) = -a;
    }
    lp.b[out] = sign * problem.rhs[i];
    ++out;
  };
  for (Index i = 0; i < m; ++i) {
    switch (problem.senses[static_cast<std::size_t>(i)]) {
      case Sense::LessEqual: emit(i, 1.0); break;
      case Sense::GreaterEqual: emit(i, -1.0); break;
      case Sense::Equal:
        emit(i, 1.0);
        emit(i, -1.0);
        break;
    }
  }

  const LpSolution standard = solve_standard_lp(lp);
  LpSolution sol;
  sol.x.resize(n);
  for (Index j = 0; j < n; ++j) {
    double v = standard.x[j];
    if (const Index k = neg_col[static_cast<std::size_t>(j)]; k >= 0) v -= standard.x[k];
    sol.x[j] = v;
  }
  sol.value = problem.objective.dot(sol.x);
  sol.iterations = standard.iterations;
  return sol;
}

}  // namespace hdiv
