#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hdiv/clime.hpp"
#include "hdiv/inference.hpp"
#include "hdiv/lasso.hpp"
#include "hdiv/mat_core.hpp"
#include "hdiv/rng.hpp"
#include "hdiv/two_stage.hpp"

namespace hdiv {

enum class SigmaStructure { Toeplitz, Circulant };

std::string_view to_string(SigmaStructure s);
/// Accepts "TZ"/"toeplitz" and "CS"/"circulant".
SigmaStructure parse_sigma_structure(std::string_view text);

/// How the endogeneity pattern enters the joint covariance of (u, v).
enum class NoiseCoupling {
  /// [[su2, c^T], [c, sv2 I + c c^T / su2]]: Var(u) and Cov(u, v) exactly as
  /// specified, with the v block inflated just enough to be positive definite.
  Conditional,
  /// [[su2, c^T], [c, sv2 I]] as written; not positive definite once
  /// ||c||^2 >= su2 * sv2 (true for the standard pattern when p_x >= 5).
  Literal,
};

struct IvModel {
  Matrix A;      ///< p_z x p_x, ones on each column's support
  Vector beta;   ///< ones on support_beta
  std::vector<std::size_t> support_beta;
  std::vector<std::vector<std::size_t>> support_a;
  SpdMatrix sigma_z;
  Vector sigma_uv;        ///< Cov(u, v_j)
  SpdMatrix sigma_noise;  ///< joint covariance of (u, v_1..v_px)
  double sigma_u2 = 0.7;
  double sigma_v2 = 0.7;
  /// Inverse of A^T Sigma_z A; empty when that matrix is singular.
  std::optional<Matrix> population_theta;

  Matrix population_gram() const;
};

struct StudyConfig {
  std::size_t n = 100;
  std::size_t px = 125;
  std::size_t pz = 150;
  std::size_t sb = 3;
  std::size_t sa = 5;
  SigmaStructure structure = SigmaStructure::Circulant;
  std::size_t trials = 100;
  double alpha = 0.05;
  double kappa = 1.2;
  CvOptions cv;
  SeMode se_mode = SeMode::Robust;
  std::uint64_t seed = 20240101;
  std::size_t threads = 1;

  double rho = 0.8;
  Index cs_band = 5;
  double cs_offval = 0.1;
  double sigma_u2 = 0.7;
  double sigma_v2 = 0.7;
  NoiseCoupling coupling = NoiseCoupling::Conditional;

  /// Compute the remainder decomposition in every trial.
  bool diagnostics = true;
  /// Debug: use the true A as the first-stage estimate.
  bool oracle_first_stage = false;
  /// Diagnostic: also fit a cross-validated lasso of y on X directly.
  bool naive_second_stage = false;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// Uniform s-subset of {0..p-1}, sorted.
std::vector<std::size_t> gen_supports(Rng& rng, std::size_t p, std::size_t s);

/// Cov(u, v) pattern: one 0.5 and min(9, p_x - 1) entries 0.25 at random
/// positions, 0.05 elsewhere.
Vector endogeneity_pattern(Rng& rng, std::size_t px);

SpdMatrix build_sigma_uv(Rng& rng, std::size_t px, double sigma_u2 = 0.7, double sigma_v2 = 0.7,
                         NoiseCoupling coupling = NoiseCoupling::Conditional);

/// Joint noise covariance for a given cross-covariance vector.
SpdMatrix noise_covariance(const Vector& sigma_uv, double sigma_u2, double sigma_v2, NoiseCoupling coupling);

IvModel make_model(const StudyConfig& cfg, Rng& rng);

/// The model a study with this config uses (drawn from the config seed).
IvModel make_model(const StudyConfig& cfg);

struct TrialData {
  Matrix Z, X, V, D;
  Vector y, u;
};

TrialData draw_trial_data(const IvModel& model, std::size_t n, Rng& rng);

struct TrialRecord {
  std::size_t index = 0;
  Vector beta_hat;
  InferenceResult inference;
  std::vector<std::uint8_t> covered;
  double coverage = 0.0;
  double avg_length = 0.0;
  double mse = 0.0;
  std::optional<RemainderDiagnostics> diagnostics;

  std::size_t lasso_fits = 0;
  std::size_t lasso_certified = 0;  ///< fits passing kkt_check at 1e-6
  double worst_kkt = 0.0;
  std::size_t clime_rows = 0;
  std::size_t clime_certified = 0;

  std::optional<Vector> naive_beta;
};

/// Stream owned by trial t of a study with this seed.
Rng trial_stream(std::uint64_t seed, std::size_t trial);

TrialRecord run_trial(const IvModel& model, const StudyConfig& cfg, const Rng& rng, std::size_t index = 0);

struct StudyMetrics {
  double coverage = 0.0;
  double avg_length = 0.0;
  double mse = 0.0;
  std::size_t failed_trials = 0;
  std::vector<std::string> failures;
  std::vector<TrialRecord> trials;  ///< successful trials in index order
};

/// Aggregates per-trial records (double loop over coordinates and trials).
void aggregate(StudyMetrics& metrics, std::size_t px);

/// Runs cfg.trials trials; throws StudyFailed if more than 5% of them fail.
StudyMetrics run_study(const StudyConfig& cfg);

}  // namespace hdiv
