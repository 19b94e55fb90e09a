#include "cfcf/errors.hpp"

namespace cfcf {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SymmetryViolation: return "SymmetryViolation";
    case ErrorKind::DivisionByZero: return "DivisionByZero";
    case ErrorKind::InvalidSigma: return "InvalidSigma";
    case ErrorKind::NonPositiveLambda: return "NonPositiveLambda";
    case ErrorKind::InvalidStep: return "InvalidStep";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::InvalidVariant: return "InvalidVariant";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::EmptyImage: return "EmptyImage";
    case ErrorKind::DegenerateSequence: return "DegenerateSequence";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::NoValidSequences: return "NoValidSequences";
    case ErrorKind::CorruptSample: return "CorruptSample";
    case ErrorKind::MissingModel: return "MissingModel";
    case ErrorKind::InvalidBox: return "InvalidBox";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyInput: return "EmptyInput";
  }
  return "Error";
}

}  // namespace cfcf
