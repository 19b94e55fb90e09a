#pragma once

#include <stdexcept>
#include <string>

namespace cfcf {

enum class ErrorKind {
  DimensionMismatch,
  SymmetryViolation,
  DivisionByZero,
  InvalidSigma,
  NonPositiveLambda,
  InvalidStep,
  InvalidArgument,
  ShapeMismatch,
  StaleCache,
  NonFiniteLoss,
  InvalidVariant,
  CorruptFile,
  VersionMismatch,
  EmptyImage,
  DegenerateSequence,
  IoError,
  NoValidSequences,
  CorruptSample,
  MissingModel,
  InvalidBox,
  LengthMismatch,
  ParseError,
  EmptyInput,
};

const char* to_string(ErrorKind kind) noexcept;

/// Base of every error thrown by the library. `kind()` lets callers (the CLI
/// in particular) map failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <ErrorKind K>
class KindedError : public Error {
 public:
  explicit KindedError(const std::string& what) : Error(K, what) {}
};

using DimensionMismatch = KindedError<ErrorKind::DimensionMismatch>;
using SymmetryViolation = KindedError<ErrorKind::SymmetryViolation>;
using DivisionByZero = KindedError<ErrorKind::DivisionByZero>;
using InvalidSigma = KindedError<ErrorKind::InvalidSigma>;
using NonPositiveLambda = KindedError<ErrorKind::NonPositiveLambda>;
using InvalidStep = KindedError<ErrorKind::InvalidStep>;
using InvalidArgument = KindedError<ErrorKind::InvalidArgument>;
using ShapeMismatch = KindedError<ErrorKind::ShapeMismatch>;
using StaleCache = KindedError<ErrorKind::StaleCache>;
using NonFiniteLoss = KindedError<ErrorKind::NonFiniteLoss>;
using InvalidVariant = KindedError<ErrorKind::InvalidVariant>;
using CorruptFile = KindedError<ErrorKind::CorruptFile>;
using VersionMismatch = KindedError<ErrorKind::VersionMismatch>;
using EmptyImage = KindedError<ErrorKind::EmptyImage>;
using DegenerateSequence = KindedError<ErrorKind::DegenerateSequence>;
using IoError = KindedError<ErrorKind::IoError>;
using NoValidSequences = KindedError<ErrorKind::NoValidSequences>;
using CorruptSample = KindedError<ErrorKind::CorruptSample>;
using MissingModel = KindedError<ErrorKind::MissingModel>;
using InvalidBox = KindedError<ErrorKind::InvalidBox>;
using LengthMismatch = KindedError<ErrorKind::LengthMismatch>;
using ParseError = KindedError<ErrorKind::ParseError>;
using EmptyInput = KindedError<ErrorKind::EmptyInput>;

}  // namespace cfcf
