#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace camdp {

enum class ErrorKind {
  // geom
  DegenerateGeometry,
  NonPsdCovariance,
  SingularCovariance,
  InfeasibleReduction,
  // maneuver
  InvalidGeometry,
  InvalidArgument,
  TransitAltitudeExceeded,
  NoFeasiblePlan,
  // cdm
  MissingColumn,
  EmptyDataset,
  MalformedRow,
  InsufficientData,
  FitDiverged,
  // simenv
  ExhaustedDataset,
  EpisodeAborted,
  // policy
  DivergedTraining,
  ShapeMismatch,
  MalformedParams,
  // cli / io
  ConfigError,
  IoError,
};

inline constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::NonPsdCovariance: return "NonPsdCovariance";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::InfeasibleReduction: return "InfeasibleReduction";
    case ErrorKind::InvalidGeometry: return "InvalidGeometry";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::TransitAltitudeExceeded: return "TransitAltitudeExceeded";
    case ErrorKind::NoFeasiblePlan: return "NoFeasiblePlan";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::FitDiverged: return "FitDiverged";
    case ErrorKind::ExhaustedDataset: return "ExhaustedDataset";
    case ErrorKind::EpisodeAborted: return "EpisodeAborted";
    case ErrorKind::DivergedTraining: return "DivergedTraining";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::MalformedParams: return "MalformedParams";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

/// Process exit class: 2 configuration, 3 data or I/O, 4 numerical, 1 other.
inline constexpr int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ConfigError:
      return 2;
    case ErrorKind::IoError:
    case ErrorKind::MissingColumn:
    case ErrorKind::EmptyDataset:
    case ErrorKind::MalformedRow:
    case ErrorKind::InsufficientData:
    case ErrorKind::ExhaustedDataset:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::MalformedParams:
      return 3;
    case ErrorKind::DegenerateGeometry:
    case ErrorKind::NonPsdCovariance:
    case ErrorKind::SingularCovariance:
    case ErrorKind::InfeasibleReduction:
    case ErrorKind::InvalidGeometry:
    case ErrorKind::TransitAltitudeExceeded:
    case ErrorKind::NoFeasiblePlan:
    case ErrorKind::FitDiverged:
    case ErrorKind::EpisodeAborted:
    case ErrorKind::DivergedTraining:
      return 4;
    case ErrorKind::InvalidArgument:
      return 1;
  }
  return 1;
}

}  // namespace camdp
