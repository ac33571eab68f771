#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace paracosm {

enum class ErrorKind {
  NonFiniteInput,
  EmptyTermSet,
  DimensionMismatch,
  EncoderMismatch,
  ZeroVector,
  EmptyGallery,
  UnknownImageId,
  InvalidArgument,
  // backends
  BackendTimeout,
  BackendUnavailable,
  BackendRejected,
  MalformedResponse,
  EmptyCaption,
  DimensionDrift,
  // prompts
  MissingSharedConcept,
  UnknownDataset,
  UnboundPlaceholder,
  // feature store
  DuplicateImageId,
  IoFailure,
  CorruptStore,
  VersionUnsupported,
  MissingTermEmbedding,
  // datasets
  SchemaError,
  InvalidRate,
  // metrics
  LengthMismatch,
  MissingSubset,
  EmptyGT,
  // pipeline
  PreconditionFailed,
  FailureThresholdExceeded,
  ConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::EmptyTermSet: return "EmptyTermSet";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EncoderMismatch: return "EncoderMismatch";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::EmptyGallery: return "EmptyGallery";
    case ErrorKind::UnknownImageId: return "UnknownImageId";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::BackendTimeout: return "BackendTimeout";
    case ErrorKind::BackendUnavailable: return "BackendUnavailable";
    case ErrorKind::BackendRejected: return "BackendRejected";
    case ErrorKind::MalformedResponse: return "MalformedResponse";
    case ErrorKind::EmptyCaption: return "EmptyCaption";
    case ErrorKind::DimensionDrift: return "DimensionDrift";
    case ErrorKind::MissingSharedConcept: return "MissingSharedConcept";
    case ErrorKind::UnknownDataset: return "UnknownDataset";
    case ErrorKind::UnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorKind::DuplicateImageId: return "DuplicateImageId";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::CorruptStore: return "CorruptStore";
    case ErrorKind::VersionUnsupported: return "VersionUnsupported";
    case ErrorKind::MissingTermEmbedding: return "MissingTermEmbedding";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::InvalidRate: return "InvalidRate";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::MissingSubset: return "MissingSubset";
    case ErrorKind::EmptyGT: return "EmptyGT";
    case ErrorKind::PreconditionFailed: return "PreconditionFailed";
    case ErrorKind::FailureThresholdExceeded: return "FailureThresholdExceeded";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library. `kind()` is the stable, testable part;
/// the message carries context (ids, field paths, prompts).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Backend failure that survived the retry budget.
class BackendError : public Error {
 public:
  BackendError(ErrorKind kind, const std::string& message, int attempts)
      : Error(kind, message + " (attempts=" + std::to_string(attempts) + ")"), attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

}  // namespace paracosm
