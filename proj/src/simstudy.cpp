#include "hdiv/simstudy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>

#include "hdiv/errors.hpp"
#include "hdiv/parallel.hpp"

namespace hdiv {

namespace {

constexpr std::uint64_t kModelTag = 0;
constexpr std::uint64_t kTrialTag = 1;
constexpr double kCertificateKkt = 1e-6;

void invalid(const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); }

SpdMatrix instrument_covariance(const StudyConfig& cfg) {
  const auto pz = static_cast<Index>(cfg.pz);
  return cfg.structure == SigmaStructure::Toeplitz ? toeplitz_sigma(pz, cfg.rho)
                                                   : circulant_sigma(pz, cfg.cs_band, cfg.cs_offval);
}

}  // namespace

std::string_view to_string(SigmaStructure s) {
  return s == SigmaStructure::Toeplitz ? "TZ" : "CS";
}

SigmaStructure parse_sigma_structure(std::string_view text) {
  if (text == "TZ" || text == "tz" || text == "toeplitz") return SigmaStructure::Toeplitz;
  if (text == "CS" || text == "cs" || text == "circulant") return SigmaStructure::Circulant;
  throw Error(ErrorCode::InvalidArgument, "unknown covariance structure '" + std::string(text) + "'");
}

Matrix IvModel::population_gram() const {
  return A.transpose() * sigma_z.matrix() * A;
}

void StudyConfig::validate() const {
  if (n < 2) invalid("n must be >= 2");
  if (px < 1 || pz < 1) invalid("p_x and p_z must be >= 1");
  if (px > pz) invalid("p_x must not exceed p_z");
  if (sb > px) invalid("s_b must not exceed p_x");
  if (sa > pz) invalid("s_a must not exceed p_z");
  if (trials < 1) invalid("trials must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1)");
  if (!(kappa > 1.0)) invalid("kappa must exceed 1");
  if (cv.folds < 2 || n < cv.folds) invalid("need n >= folds >= 2");
  if (cv.grid_length < 2 || !(cv.grid_ratio > 0.0 && cv.grid_ratio < 1.0)) invalid("invalid lambda grid");
  if (structure == SigmaStructure::Circulant && static_cast<Index>(pz) <= 2 * cs_band) {
    invalid("circulant structure needs p_z > 2 * band");
  }
  if (!(std::abs(rho) < 1.0)) invalid("rho must satisfy |rho| < 1");
  if (!(sigma_u2 > 0.0 && sigma_v2 > 0.0)) invalid("noise variances must be positive");
}

std::vector<std::size_t> gen_supports(Rng& rng, std::size_t p, std::size_t s) {
  if (s > p) {
    throw Error(ErrorCode::SupportTooLarge, "support size " + std::to_string(s) + " exceeds " + std::to_string(p));
  }
  std::vector<std::size_t> pool(p);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t k = 0; k < s; ++k) {
    const auto pick = k + static_cast<std::size_t>(rng.uniform_index(p - k));
    std::swap(pool[k], pool[pick]);
  }
  pool.resize(s);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Vector endogeneity_pattern(Rng& rng, std::size_t px) {
  Vector c = Vector::Constant(static_cast<Index>(px), 0.05);
  if (px == 0) return c;
  std::vector<std::size_t> order(px);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  c[static_cast<Index>(order[0])] = 0.5;
  const std::size_t quarter = std::min<std::size_t>(9, px - 1);
  for (std::size_t k = 1; k <= quarter; ++k) c[static_cast<Index>(order[k])] = 0.25;
  return c;
}

SpdMatrix noise_covariance(const Vector& sigma_uv, double sigma_u2, double sigma_v2, NoiseCoupling coupling) {
  const Index px = sigma_uv.size();
  Matrix m = Matrix::Zero(px + 1, px + 1);
  m(0, 0) = sigma_u2;
  m.block(1, 0, px, 1) = sigma_uv;
  m.block(0, 1, 1, px) = sigma_uv.transpose();
  m.block(1, 1, px, px) = sigma_v2 * Matrix::Identity(px, px);
  if (coupling == NoiseCoupling::Conditional) {
    // Outer product written entrywise so the block stays exactly symmetric.
    for (Index j = 0; j < px; ++j) {
      for (Index k = 0; k < px; ++k) m(1 + j, 1 + k) += sigma_uv[j] * sigma_uv[k] / sigma_u2;
    }
  }
  return SpdMatrix(std::move(m));
}

SpdMatrix build_sigma_uv(Rng& rng, std::size_t px, double sigma_u2, double sigma_v2, NoiseCoupling coupling) {
  return noise_covariance(endogeneity_pattern(rng, px), sigma_u2, sigma_v2, coupling);
}

IvModel make_model(const StudyConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto px = static_cast<Index>(cfg.px);
  const auto pz = static_cast<Index>(cfg.pz);

  Rng beta_rng = rng.split(1);
  std::vector<std::size_t> support_beta = gen_supports(beta_rng, cfg.px, cfg.sb);
  Vector beta = Vector::Zero(px);
  for (std::size_t k : support_beta) beta[static_cast<Index>(k)] = 1.0;

  Matrix A = Matrix::Zero(pz, px);
  std::vector<std::vector<std::size_t>> support_a(cfg.px);
  const Rng a_rng = rng.split(2);
  for (std::size_t j = 0; j < cfg.px; ++j) {
    Rng col = a_rng.split(j);
    support_a[j] = gen_supports(col, cfg.pz, cfg.sa);
    for (std::size_t k : support_a[j]) A(static_cast<Index>(k), static_cast<Index>(j)) = 1.0;
  }

  Rng uv_rng = rng.split(3);
  Vector sigma_uv = endogeneity_pattern(uv_rng, cfg.px);
  SpdMatrix noise = noise_covariance(sigma_uv, cfg.sigma_u2, cfg.sigma_v2, cfg.coupling);

  IvModel model{std::move(A),        std::move(beta),    std::move(support_beta), std::move(support_a),
                instrument_covariance(cfg), std::move(sigma_uv), std::move(noise),        cfg.sigma_u2,
                cfg.sigma_v2,        std::nullopt};
  try {
    model.population_theta = population_precision(model.population_gram());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularPopulationGram) throw;
  }
  return model;
}

IvModel make_model(const StudyConfig& cfg) {
  Rng rng = Rng(cfg.seed).split(kModelTag);
  return make_model(cfg, rng);
}

TrialData draw_trial_data(const IvModel& model, std::size_t n, Rng& rng) {
  const auto rows = static_cast<Index>(n);
  const Index px = model.A.cols();
  TrialData d;
  d.Z = mvnormal_sample(rng, cholesky(model.sigma_z), rows);
  const Matrix noise = mvnormal_sample(rng, cholesky(model.sigma_noise), rows);
  d.u = noise.col(0);
  d.V = noise.rightCols(px);
  d.D = d.Z * model.A;
  d.X = d.D + d.V;
  d.y = d.X * model.beta + d.u;
  return d;
}

Rng trial_stream(std::uint64_t seed, std::size_t trial) {
  return Rng(seed).split(kTrialTag).split(trial);
}

TrialRecord run_trial(const IvModel& model, const StudyConfig& cfg, const Rng& rng, std::size_t index) {
  TrialRecord rec;
  rec.index = index;
  Rng data_rng = rng.split(0);
  const TrialData data = draw_trial_data(model, cfg.n, data_rng);
  const Rng estimation = rng.split(1);

  TwoStageFit fit;
  if (cfg.oracle_first_stage) {
    fit.first.Ahat = model.A;
    fit.first.Dhat = data.D;
    fit.first.lambdas.assign(cfg.px, 0.0);
    fit.gram = gram(fit.first.Dhat);
    Rng second = second_stage_stream(estimation);
    fit.second = fit_second_stage(fit.first.Dhat, data.y, second, cfg.cv);
  } else {
    fit = fit_two_stage(data.Z, data.X, data.y, estimation, cfg.cv, 1);
  }
  rec.beta_hat = fit.beta_hat();

  for (std::size_t j = 0; j < fit.first.fits.size(); ++j) {
    const double r = kkt_residual(data.Z, data.X.col(static_cast<Index>(j)), fit.first.Ahat.col(static_cast<Index>(j)),
                                  fit.first.lambdas[j]);
    ++rec.lasso_fits;
    rec.lasso_certified += r <= kCertificateKkt;
    rec.worst_kkt = std::max(rec.worst_kkt, r);
  }
  {
    const double r = kkt_residual(fit.first.Dhat, data.y, rec.beta_hat, fit.second.fit.lambda);
    ++rec.lasso_fits;
    rec.lasso_certified += r <= kCertificateKkt;
    rec.worst_kkt = std::max(rec.worst_kkt, r);
  }

  PrecisionOptions popts;
  popts.kappa = cfg.kappa;
  const PrecisionEstimate precision = build_precision(fit.gram, popts);
  rec.clime_rows = precision.rows.size();
  for (const ClimeRow& row : precision.rows) rec.clime_certified += row.certified();

  rec.inference = debiased_inference(rec.beta_hat, precision.theta, fit.first.Dhat, data.X, data.y, cfg.alpha,
                                     cfg.se_mode);

  const Index px = static_cast<Index>(cfg.px);
  rec.covered.resize(cfg.px);
  double hits = 0.0, length = 0.0, sq = 0.0;
  for (Index j = 0; j < px; ++j) {
    const double b = model.beta[j];
    const bool in = rec.inference.ci_lower[j] <= b && b <= rec.inference.ci_upper[j];
    rec.covered[static_cast<std::size_t>(j)] = in ? 1 : 0;
    hits += in ? 1.0 : 0.0;
    length += rec.inference.ci_upper[j] - rec.inference.ci_lower[j];
    const double e = rec.beta_hat[j] - b;
    sq += e * e;
  }
  rec.coverage = hits / static_cast<double>(px);
  rec.avg_length = length / static_cast<double>(px);
  rec.mse = sq / static_cast<double>(px);

  if (cfg.diagnostics) {
    if (!model.population_theta) {
      throw Error(ErrorCode::SingularPopulationGram, "remainder diagnostics need an invertible A^T Sigma_z A");
    }
    const PopulationTruth truth{model.beta, *model.population_theta, data.D, data.u};
    rec.diagnostics = remainder_decomposition(truth, rec.beta_hat, precision.theta, fit.first.Dhat, data.X, data.y);
  }

  if (cfg.naive_second_stage) {
    Rng naive = estimation.split(3);
    rec.naive_beta = cv_lasso(data.X, data.y, naive, cfg.cv).fit.coefficients;
  }
  return rec;
}

void aggregate(StudyMetrics& metrics, std::size_t px) {
  const auto& trials = metrics.trials;
  const double N = static_cast<double>(trials.size());
  const double p = static_cast<double>(px);
  metrics.coverage = metrics.avg_length = metrics.mse = 0.0;
  if (trials.empty()) return;
  for (std::size_t j = 0; j < px; ++j) {
    double hits = 0.0, length = 0.0;
    for (const TrialRecord& t : trials) {
      hits += t.covered[j];
      length += t.inference.ci_upper[static_cast<Index>(j)] - t.inference.ci_lower[static_cast<Index>(j)];
    }
    metrics.coverage += hits / N;
    metrics.avg_length += length / N;
  }
  metrics.coverage /= p;
  metrics.avg_length /= p;
  for (const TrialRecord& t : trials) metrics.mse += t.mse;
  metrics.mse /= N;
}

StudyMetrics run_study(const StudyConfig& cfg) {
  cfg.validate();
  const IvModel model = make_model(cfg);
  std::vector<std::optional<TrialRecord>> slots(cfg.trials);
  std::vector<std::string> errors(cfg.trials);
  parallel_for(cfg.trials, resolve_threads(cfg.threads), [&](std::size_t t) {
    try {
      slots[t] = run_trial(model, cfg, trial_stream(cfg.seed, t), t);
    } catch (const Error& e) {
      errors[t] = "trial " + std::to_string(t) + ": " + e.what();
    }
  });

  StudyMetrics metrics;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    if (slots[t]) {
      metrics.trials.push_back(std::move(*slots[t]));
    } else {
      ++metrics.failed_trials;
      metrics.failures.push_back(errors[t]);
    }
  }
  if (static_cast<double>(metrics.failed_trials) > 0.05 * static_cast<double>(cfg.trials)) {
    std::string msg = std::to_string(metrics.failed_trials) + " of " + std::to_string(cfg.trials) + " trials failed";
    if (!metrics.failures.empty()) msg += "; first: " + metrics.failures.front();
    throw Error(ErrorCode::StudyFailed, msg);
  }
  aggregate(metrics, cfg.px);
  return metrics;
}

}  // namespace hdiv
