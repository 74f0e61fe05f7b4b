#include "mixda/error.hpp"

namespace mixda {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::AllZero: return "AllZero";
    case Errc::NegativeMass: return "NegativeMass";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::ZeroPrior: return "ZeroPrior";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::EmptySet: return "EmptySet";
    case Errc::InvalidParam: return "InvalidParam";
    case Errc::ImpossibleEvidence: return "ImpossibleEvidence";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::AllZeroWeights: return "AllZeroWeights";
    case Errc::EmptyMatrix: return "EmptyMatrix";
    case Errc::EmptyStream: return "EmptyStream";
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::DimOverflow: return "DimOverflow";
    case Errc::BadHeader: return "BadHeader";
    case Errc::SchemaError: return "SchemaError";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::MissingFile: return "MissingFile";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_validation_error(Errc code) {
  switch (code) {
    case Errc::AllZero:
    case Errc::ZeroPrior:
    case Errc::ImpossibleEvidence:
    case Errc::EmptySet:
      return false;
    default:
      return true;
  }
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

Error Error::annotated(std::string_view context) const {
  std::string msg = what();
  // Strip our own "<Code>: " prefix so it is not repeated.
  const auto prefix = std::string(to_string(code_)) + ": ";
  if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
  return Error(code_, std::string(context) + ": " + msg);
}

}  // namespace mixda
