#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "hdiv/clime.hpp"
#include "hdiv/errors.hpp"
#include "oracles.hpp"

using namespace hdiv;

namespace {

GramMatrix as_gram(Matrix m) { return GramMatrix::from_matrix(std::move(m), "test"); }

GramMatrix random_gram(Rng& rng, Index n, Index p) { return gram(oracle::random_matrix(rng, n, p)); }

}  // namespace

TEST_CASE("min_inf_residual examples") {
  const GramMatrix id = as_gram(Matrix::Identity(3, 3));
  for (std::size_t j = 0; j < 3; ++j) CHECK(min_inf_residual(id, j) == 0.0);

  Rng rng(71);
  const GramMatrix inv = random_gram(rng, 30, 5);
  for (std::size_t j = 0; j < 5; ++j) CHECK(min_inf_residual(inv, j) <= 1e-8);

  // rank one: residual (v - 1, v), best at v = 1/2
  const GramMatrix ones = as_gram(Matrix::Ones(2, 2));
  CHECK(min_inf_residual(ones, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(min_inf_residual(ones, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("min_inf_residual matches the Chebyshev oracle on singular matrices") {
  Rng rng(72);
  for (int rep = 0; rep < 20; ++rep) {
    const Index p = 3 + static_cast<Index>(rng.uniform_index(2));
    const GramMatrix s = random_gram(rng, 2, p);  // rank 2 < p
    // theta only matters through S theta, so parametrise theta = Q phi over an
    // orthonormal basis Q of range(S); the reduced LP has vertices.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s.sigma);
    std::vector<Index> keep;
    for (Index k = 0; k < p; ++k)
      if (eig.eigenvalues()[k] > 1e-10 * eig.eigenvalues().cwiseAbs().maxCoeff()) keep.push_back(k);
    const Matrix SQ = s.sigma * eig.eigenvectors()(Eigen::all, keep);
    const auto r = static_cast<Index>(keep.size());
    for (std::size_t j = 0; j < static_cast<std::size_t>(p); ++j) {
      // minimize t over (phi, t) with -t <= S Q phi - e_j <= t
      Matrix G = Matrix::Zero(2 * p, r + 1);
      Vector h = Vector::Zero(2 * p);
      for (Index k = 0; k < p; ++k) {
        G.block(k, 0, 1, r) = SQ.row(k);
        G(k, r) = -1.0;
        G.block(p + k, 0, 1, r) = -SQ.row(k);
        G(p + k, r) = -1.0;
        h[k] = k == static_cast<Index>(j) ? 1.0 : 0.0;
        h[p + k] = -h[k];
      }
      Vector c = Vector::Zero(r + 1);
      c[r] = 1.0;
      const auto ref = oracle::enumerate_vertices(c, G, h);
      CHECK(min_inf_residual(s, j) == doctest::Approx(ref.value).epsilon(1e-9));
    }
  }
}

TEST_CASE("solve_clime_row examples") {
  const GramMatrix id = as_gram(Matrix::Identity(3, 3));
  const ClimeRow r = solve_clime_row(id, 0, 0.2);
  CHECK(r.theta[0] == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r.theta.tail(2).isZero(1e-12));
  CHECK(r.objective == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r.certified());

  for (double mu : {1.0, 1.5}) {
    const ClimeRow z = solve_clime_row(id, 1, mu);
    CHECK(z.theta.isZero(1e-12));
    CHECK(z.objective == doctest::Approx(0.0));
  }

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 1.0;
  const ClimeRow e = solve_clime_row(as_gram(d), 0, 0.0);
  CHECK(e.theta[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.theta[1] == doctest::Approx(0.0));
}

TEST_CASE("solve_clime_row below the minimal tolerance is infeasible") {
  const GramMatrix ones = as_gram(Matrix::Ones(2, 2));
  try {
    solve_clime_row(ones, 0, 0.4);
    FAIL("expected Infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }
  CHECK(solve_clime_row(ones, 0, 0.5).certified());
}

TEST_CASE("CLIME rows agree with vertex enumeration") {
  Rng rng(73);
  int instances = 0;
  while (instances < 50) {
    const Index p = 2 + static_cast<Index>(rng.uniform_index(3));
    const Index n = 2 + static_cast<Index>(rng.uniform_index(8));
    const GramMatrix s = random_gram(rng, n, p);
    const auto j = static_cast<std::size_t>(rng.uniform_index(static_cast<std::uint64_t>(p)));
    const double mu = std::max(1.2 * min_inf_residual(s, j), kMuFloor) + 0.05 * rng.uniform();
    const ClimeRow row = solve_clime_row(s, j, mu);
    const auto ref = oracle::clime_row_by_vertices(s.sigma, static_cast<Index>(j), mu);
    CHECK(row.certified());
    CHECK(std::abs(row.objective - ref.value) <= 1e-7 * std::max(1.0, std::abs(ref.value)));
    bool unique = true;
    for (const Vector& v : ref.minimisers) unique = unique && (v - ref.minimisers.front()).norm() <= 1e-9;
    if (unique) CHECK((row.theta - ref.minimisers.front()).lpNorm<Eigen::Infinity>() <= 1e-7);
    ++instances;
  }
}

TEST_CASE("row objective is non-increasing in mu") {
  Rng rng(74);
  for (int rep = 0; rep < 10; ++rep) {
    const GramMatrix s = random_gram(rng, 8, 12);
    const std::size_t j = static_cast<std::size_t>(rep) % 12;
    const double base = min_inf_residual(s, j);
    double last = std::numeric_limits<double>::infinity();
    for (double k : {1.1, 1.5, 3.0}) {
      const ClimeRow row = solve_clime_row(s, j, std::max(k * base, kMuFloor));
      CHECK(row.certified());
      CHECK(row.objective <= last + 1e-9);
      last = row.objective;
    }
  }
}

TEST_CASE("build_precision on the identity") {
  const PrecisionEstimate est = build_precision(as_gram(Matrix::Identity(4, 4)));
  CHECK((est.theta - Matrix::Identity(4, 4)).lpNorm<Eigen::Infinity>() <= 1e-9);
  CHECK(est.all_certified());
  CHECK(est.kappa == 1.2);
  for (const ClimeRow& r : est.rows) CHECK(r.mu == kMuFloor);
}

TEST_CASE("build_precision on a seeded sample certifies every row") {
  Rng rng(75);
  const GramMatrix s = random_gram(rng, 50, 5);
  const PrecisionEstimate est = build_precision(s);
  REQUIRE(est.rows.size() == 5);
  for (std::size_t j = 0; j < 5; ++j) {
    const ClimeRow& r = est.rows[j];
    CHECK(r.certified());
    Vector e = Vector::Zero(5);
    e[static_cast<Index>(j)] = 1.0;
    const double resid = (s.sigma * r.theta - e).lpNorm<Eigen::Infinity>();
    CHECK(resid <= std::max(1.2 * est.min_residuals[j], kMuFloor) + 1e-8);
    CHECK(r.residual_inf == doctest::Approx(resid).epsilon(1e-12));
  }
}

TEST_CASE("rows approach the inverse as kappa tends to one") {
  Rng rng(76);
  const GramMatrix s = random_gram(rng, 5000, 4);
  PrecisionOptions opts;
  opts.kappa = 1.001;
  const PrecisionEstimate est = build_precision(s, opts);
  CHECK((est.theta - s.sigma.inverse()).lpNorm<Eigen::Infinity>() <= 0.05);
}

TEST_CASE("rows are stored raw, without symmetrisation") {
  Rng rng(77);
  const GramMatrix s = random_gram(rng, 10, 15);
  const PrecisionEstimate est = build_precision(s);
  for (std::size_t j = 0; j < 15; ++j) {
    CHECK(est.theta.row(static_cast<Index>(j)).transpose() == est.rows[j].theta);
    // each row is reproducible on its own
    CHECK(solve_clime_row(s, j, est.rows[j].mu).theta == est.rows[j].theta);
  }
  CHECK(est.theta != est.theta.transpose());
}

TEST_CASE("population Gram with the floor tolerance inverts exactly") {
  Rng rng(78);
  const Matrix B = oracle::random_matrix(rng, 6, 6);
  const Matrix sigma = B * B.transpose() / 6.0 + 0.5 * Matrix::Identity(6, 6);
  const Matrix sym = 0.5 * (sigma + sigma.transpose());
  PrecisionOptions opts;
  opts.uniform_mu = kMuFloor;
  const PrecisionEstimate est = build_precision(as_gram(sym), opts);
  CHECK((est.theta * sym - Matrix::Identity(6, 6)).lpNorm<Eigen::Infinity>() <= 1e-6);
  CHECK(est.min_residuals.empty());
}

TEST_CASE("threaded build_precision matches serial") {
  Rng rng(79);
  const GramMatrix s = random_gram(rng, 20, 30);
  PrecisionOptions serial, threaded;
  threaded.threads = 4;
  CHECK(build_precision(s, serial).theta == build_precision(s, threaded).theta);
}
