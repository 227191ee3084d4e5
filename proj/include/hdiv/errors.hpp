#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hdiv {

enum class ErrorCode {
  DimensionMismatch,
  NotPositiveDefinite,
  InvalidRho,
  BandOverlap,
  InvalidGridSpec,
  TooFewObservations,
  Infeasible,
  Unbounded,
  NumericalFailure,
  SingularPopulationGram,
  NonpositiveDiagonal,
  InvalidAlpha,
  SupportTooLarge,
  InvalidArgument,
  StudyFailed,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. Every failure carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::InvalidRho: return "InvalidRho";
    case ErrorCode::BandOverlap: return "BandOverlap";
    case ErrorCode::InvalidGridSpec: return "InvalidGridSpec";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::SingularPopulationGram: return "SingularPopulationGram";
    case ErrorCode::NonpositiveDiagonal: return "NonpositiveDiagonal";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::SupportTooLarge: return "SupportTooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::StudyFailed: return "StudyFailed";
  }
  return "Unknown";
}

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

}  // namespace hdiv
