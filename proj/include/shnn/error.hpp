#pragma once

#include <stdexcept>
#include <string>

namespace shnn {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension mismatch, out-of-range arguments.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf reached a place that requires finite input.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class UnsupportedOperation : public Error {
 public:
  using Error::Error;
};

class IntegrationFailure : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset, model or config file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Broad error classes, used to map exceptions onto C status codes.
enum class ErrorKind { InvalidArgument, Io, Format, Numerical, Unsupported, Internal };

ErrorKind classify(const std::exception& e);

/// A failure inside one stage of an experiment run; keeps the kind of the cause.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::exception& cause)
      : Error("stage '" + stage + "': " + cause.what()),
        stage_(std::move(stage)),
        kind_(classify(cause)) {}
  [[nodiscard]] const std::string& stage() const { return stage_; }
  [[nodiscard]] ErrorKind kind() const { return kind_; }

 private:
  std::string stage_;
  ErrorKind kind_;
};

inline ErrorKind classify(const std::exception& e) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->kind();
  if (dynamic_cast<const InvalidArgument*>(&e)) return ErrorKind::InvalidArgument;
  if (dynamic_cast<const IoError*>(&e)) return ErrorKind::Io;
  if (dynamic_cast<const FormatError*>(&e)) return ErrorKind::Format;
  if (dynamic_cast<const DegenerateInput*>(&e) || dynamic_cast<const IntegrationFailure*>(&e) ||
      dynamic_cast<const TrainingDiverged*>(&e)) {
    return ErrorKind::Numerical;
  }
  if (dynamic_cast<const UnsupportedOperation*>(&e)) return ErrorKind::Unsupported;
  return ErrorKind::Internal;
}

}  // namespace shnn
