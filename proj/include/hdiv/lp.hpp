#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "hdiv/mat_core.hpp"

namespace hdiv {

enum class Sense { LessEqual, GreaterEqual, Equal };

/// minimize c^T x subject to  (A x)_i  <sense_i>  b_i,  x_j >= 0 where
/// nonnegative[j] (free otherwise).
struct LpProblem {
  Vector objective;
  Matrix constraints;
  Vector rhs;
  std::vector<Sense> senses;
  std::vector<bool> nonnegative;
};

/// minimize c^T x subject to A x <= b, x >= 0.
struct StandardLp {
  Matrix A;
  Vector b;
  Vector c;
  /// Optional (row, structural column) pivots applied to the slack basis
  /// before the simplex phases, e.g. to start from a known feasible basis.
  std::vector<std::pair<Index, Index>> crash_pivots = {};
};

struct LpSolution {
  Vector x;
  double value = 0.0;
  std::size_t iterations = 0;
};

/// Dense tableau simplex for small problems (a few hundred rows/columns).
///
/// A dual simplex pass on slightly perturbed nonnegative costs max(c, 0)
/// reaches a primal feasible basis (or proves infeasibility); a primal pass
/// on the true costs then reaches optimality (or proves unboundedness). The
/// basic solution is finally recomputed from the original data by an LU solve
/// with the optimal basis, so tableau round-off does not leak into x.
///
/// Throws Infeasible, Unbounded, or NumericalFailure.
LpSolution solve_standard_lp(const StandardLp& lp);

LpSolution solve_lp(const LpProblem& problem);

}  // namespace hdiv
