#include "hdiv/two_stage.hpp"

#include <cstdlib>
#include <string>

#include "hdiv/errors.hpp"
#include "hdiv/parallel.hpp"

namespace hdiv {

namespace {

constexpr std::uint64_t kFirstStageTag = 1;
constexpr std::uint64_t kSecondStageTag = 2;

void check_first_stage(const Matrix& Z, const Matrix& X) {
  require_dims(Z.rows() == X.rows(), "first stage: Z and X row counts differ");
  if (Z.rows() < 2) throw Error(ErrorCode::TooFewObservations, "first stage needs n >= 2");
  if (X.cols() > Z.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "first stage requires p_x <= p_z (p_x=" + std::to_string(X.cols()) +
                                                  ", p_z=" + std::to_string(Z.cols()) + ")");
  }
  for (Index k = 0; k < Z.cols(); ++k) {
    if (Z.col(k).squaredNorm() == 0.0) {
      throw Error(ErrorCode::InvalidArgument, "first stage: column " + std::to_string(k) + " of Z is all zero");
    }
  }
}

}  // namespace

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HDIV_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

GramMatrix GramMatrix::from_matrix(Matrix m, std::string source) {
  require_dims(m.rows() == m.cols(), "GramMatrix must be square");
  return GramMatrix{std::move(m), std::move(source)};
}

Rng first_stage_stream(const Rng& rng, std::size_t column) {
  return rng.split(kFirstStageTag).split(column);
}

Rng second_stage_stream(const Rng& rng) {
  return rng.split(kSecondStageTag);
}

FirstStageFit fit_first_stage(const Matrix& Z, const Matrix& X, const Rng& rng, const CvOptions& opts,
                              std::size_t threads) {
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(X.cols()));
  for (Index j = 0; j < X.cols(); ++j) streams.push_back(first_stage_stream(rng, static_cast<std::size_t>(j)));
  return fit_first_stage(Z, X, streams, opts, threads);
}

FirstStageFit fit_first_stage(const Matrix& Z, const Matrix& X, std::span<const Rng> column_streams,
                              const CvOptions& opts, std::size_t threads) {
  check_first_stage(Z, X);
  require_dims(column_streams.size() == static_cast<std::size_t>(X.cols()),
               "first stage: need one stream per column of X");
  const auto px = static_cast<std::size_t>(X.cols());
  FirstStageFit out;
  out.Ahat = Matrix::Zero(Z.cols(), X.cols());
  out.fits.resize(px);
  out.lambdas.resize(px);
  parallel_for(px, threads, [&](std::size_t j) {
    Rng stream = column_streams[j];
    try {
      CvResult cv = cv_lasso(Z, X.col(static_cast<Index>(j)), stream, opts);
      out.Ahat.col(static_cast<Index>(j)) = cv.fit.coefficients;
      out.lambdas[j] = cv.fit.lambda;
      out.fits[j] = std::move(cv.fit);
    } catch (const Error& e) {
      throw Error(e.code(), "first-stage column " + std::to_string(j) + ": " + e.what());
    }
  });
  out.Dhat = Z * out.Ahat;
  return out;
}

GramMatrix gram(const Matrix& Dhat) {
  if (Dhat.rows() < 1) throw Error(ErrorCode::TooFewObservations, "gram: no observations");
  const Index p = Dhat.cols();
  const double n = static_cast<double>(Dhat.rows());
  Matrix sigma(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index k = j; k < p; ++k) {
      const double v = Dhat.col(j).dot(Dhat.col(k)) / n;
      sigma(j, k) = v;
      sigma(k, j) = v;
    }
  }
  return GramMatrix{std::move(sigma), "Dhat"};
}

CvResult fit_second_stage(const Matrix& Dhat, const Vector& y, Rng& rng, const CvOptions& opts) {
  require_dims(Dhat.rows() == y.size(), "second stage: Dhat and y row counts differ");
  return cv_lasso(Dhat, y, rng, opts);
}

TwoStageFit fit_two_stage(const Matrix& Z, const Matrix& X, const Vector& y, const Rng& rng,
                          const CvOptions& opts, std::size_t threads) {
  require_dims(X.rows() == y.size(), "two stage: X and y row counts differ");
  TwoStageFit fit;
  fit.first = fit_first_stage(Z, X, rng, opts, threads);
  fit.gram = gram(fit.first.Dhat);
  Rng second = second_stage_stream(rng);
  fit.second = fit_second_stage(fit.first.Dhat, y, second, opts);
  return fit;
}

}  // namespace hdiv
