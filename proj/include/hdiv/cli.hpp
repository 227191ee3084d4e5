#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdiv/inference.hpp"
#include "hdiv/simstudy.hpp"

namespace hdiv::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Bad configuration or usage; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A study grid: the cross product sizes x sparsities x structures.
struct StudyGrid {
  std::vector<StudyConfig> configs;
  /// Effective settings after overrides, as canonical JSON.
  std::string echo;
};

/// Parses a JSON grid file and applies `key=value` overrides (values are
/// JSON, or bare strings). Throws ConfigError.
StudyGrid load_grid(const std::string& json_text, const std::vector<std::string>& overrides = {});
StudyGrid load_grid_file(const std::string& path, const std::vector<std::string>& overrides = {});

inline constexpr const char* kMetricsHeader = "n,p_x,p_z,s_b,s_a,sigma_structure,coverage,avg_length,mse,N,seed";
std::string metrics_row(const StudyConfig& cfg, const StudyMetrics& m);

struct FitOptions {
  double alpha = 0.05;
  double kappa = 1.2;
  SeMode se_mode = SeMode::Robust;
  std::uint64_t seed = 20240101;
  std::size_t folds = 10;
  std::size_t threads = 1;
};

inline constexpr const char* kFitHeader = "j,beta_lasso,beta_debiased,se,ci_lower,ci_upper";

/// Full pipeline on one data set; returns the CSV table (header included).
/// Dimension problems throw ConfigError.
std::string fit_table(const Vector& y, const Matrix& X, const Matrix& Z, const FitOptions& opts);

/// Entry point: `args` excludes the program name. Returns the exit code
/// (0 success, 1 runtime failure, 2 usage or configuration error).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hdiv::cli
