#include "doctest.h"

#include <cmath>

#include "hdiv/errors.hpp"
#include "hdiv/lp.hpp"
#include "oracles.hpp"

using namespace hdiv;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("min x subject to x >= 3") {
  LpProblem lp;
  lp.objective = Vector::Ones(1);
  lp.constraints = Matrix::Ones(1, 1);
  lp.rhs = Vector::Constant(1, 3.0);
  lp.senses = {Sense::GreaterEqual};
  lp.nonnegative = {false};
  const LpSolution s = solve_lp(lp);
  CHECK(s.x[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s.value == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("two-variable problem with a known vertex") {
  // max x + y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  ->  (1.6, 1.2)
  StandardLp lp;
  lp.A.resize(2, 2);
  lp.A << 1, 2, 3, 1;
  lp.b = Eigen::Vector2d(4, 6);
  lp.c = Eigen::Vector2d(-1, -1);
  const LpSolution s = solve_standard_lp(lp);
  CHECK(s.x[0] == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(s.x[1] == doctest::Approx(1.2).epsilon(1e-12));

  Matrix G(4, 2);
  G << 1, 2, 3, 1, -1, 0, 0, -1;
  Vector h(4);
  h << 4, 6, 0, 0;
  const auto ref = oracle::enumerate_vertices(lp.c, G, h);
  CHECK(s.value == doctest::Approx(ref.value).epsilon(1e-12));
}

TEST_CASE("equality rows and free variables") {
  // min |x1 - 1| + |x2 + 2| written with auxiliaries, x free; plus x1 + x2 = -1
  LpProblem lp;
  lp.objective = Vector::Zero(4);
  lp.objective.tail(2).setOnes();
  lp.constraints.resize(5, 4);
  lp.constraints << 1, 0, -1, 0,   //  x1 - t1 <= 1
      -1, 0, -1, 0,                // -x1 - t1 <= -1
      0, 1, 0, -1,                 //  x2 - t2 <= -2
      0, -1, 0, -1,                // -x2 - t2 <= 2
      1, 1, 0, 0;                  //  x1 + x2 = -1
  lp.rhs.resize(5);
  lp.rhs << 1, -1, -2, 2, -1;
  lp.senses = {Sense::LessEqual, Sense::LessEqual, Sense::LessEqual, Sense::LessEqual, Sense::Equal};
  lp.nonnegative = {false, false, true, true};
  const LpSolution s = solve_lp(lp);
  CHECK(s.value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.x[1] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("random bounded LPs agree with vertex enumeration") {
  Rng rng(61);
  int checked = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const Index d = 2 + static_cast<Index>(rng.uniform_index(3));
    const Index m = d + 2 + static_cast<Index>(rng.uniform_index(4));
    // Box -5 <= x <= 5 keeps every instance bounded; x = 0 is feasible.
    Matrix G(m + 2 * d, d);
    Vector h(m + 2 * d);
    G.topRows(m) = oracle::random_matrix(rng, m, d);
    for (Index i = 0; i < m; ++i) h[i] = 0.5 + rng.uniform();
    G.block(m, 0, d, d) = Matrix::Identity(d, d);
    G.block(m + d, 0, d, d) = -Matrix::Identity(d, d);
    h.tail(2 * d).setConstant(5.0);
    const Vector c = oracle::random_vector(rng, d);

    LpProblem lp{c, G, h, std::vector<Sense>(static_cast<std::size_t>(G.rows()), Sense::LessEqual),
                 std::vector<bool>(static_cast<std::size_t>(d), false)};
    const LpSolution s = solve_lp(lp);
    const auto ref = oracle::enumerate_vertices(c, G, h);
    CHECK(s.value == doctest::Approx(ref.value).epsilon(1e-9));
    CHECK(((G * s.x - h).array() <= 1e-9).all());
    ++checked;
  }
  CHECK(checked == 60);
}

TEST_CASE("infeasible and unbounded problems are reported") {
  LpProblem infeasible;
  infeasible.objective = Vector::Ones(1);
  infeasible.constraints.resize(2, 1);
  infeasible.constraints << 1, -1;
  infeasible.rhs = Eigen::Vector2d(1, -2);  // x <= 1 and x >= 2
  infeasible.senses = {Sense::LessEqual, Sense::LessEqual};
  infeasible.nonnegative = {true};
  CHECK(code_of([&] { solve_lp(infeasible); }) == ErrorCode::Infeasible);

  StandardLp unbounded;
  unbounded.A.resize(1, 2);
  unbounded.A << 1, -1;
  unbounded.b = Vector::Ones(1);
  unbounded.c = Eigen::Vector2d(-1, 0);
  CHECK(code_of([&] { solve_standard_lp(unbounded); }) == ErrorCode::Unbounded);
}

TEST_CASE("degenerate problem terminates") {
  // Klee-Minty style cube in 4 dimensions plus redundant copies of each row.
  const Index d = 4;
  Matrix A = Matrix::Zero(2 * d, d);
  Vector b(2 * d), c(d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < i; ++j) A(i, j) = std::pow(2.0, static_cast<double>(i - j + 1));
    A(i, i) = 1.0;
    b[i] = std::pow(5.0, static_cast<double>(i + 1));
    c[i] = -std::pow(2.0, static_cast<double>(d - i - 1));
  }
  A.bottomRows(d) = A.topRows(d);
  b.tail(d) = b.head(d);
  const LpSolution s = solve_standard_lp({A, b, c});
  CHECK(s.value == doctest::Approx(-std::pow(5.0, static_cast<double>(d))).epsilon(1e-12));
}
