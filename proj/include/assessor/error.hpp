#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace assessor {

enum class ErrorKind {
  EmptyInput,
  ZeroMeanResidual,
  MissingCalibration,
  OutOfRange,
  IncompatiblePair,
  DimensionMismatch,
  EmptyData,
  InvalidHyperparameter,
  InvalidSpec,
  SchemaError,
  TaskMismatch,
  DegenerateSplit,
  DegenerateInput,
  ResampleExhaustion,
  MetricMismatch,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ZeroMeanResidual: return "ZeroMeanResidual";
    case ErrorKind::MissingCalibration: return "MissingCalibration";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::IncompatiblePair: return "IncompatiblePair";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::InvalidHyperparameter: return "InvalidHyperparameter";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::TaskMismatch: return "TaskMismatch";
    case ErrorKind::DegenerateSplit: return "DegenerateSplit";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::ResampleExhaustion: return "ResampleExhaustion";
    case ErrorKind::MetricMismatch: return "MetricMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable kind alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace assessor
