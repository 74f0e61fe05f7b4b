#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mixda {

enum class Errc {
  AllZero,
  NegativeMass,
  NotNormalized,
  ZeroPrior,
  DimensionMismatch,
  EmptySet,
  InvalidParam,
  ImpossibleEvidence,
  LengthMismatch,
  AllZeroWeights,
  EmptyMatrix,
  EmptyStream,
  BadMagic,
  TruncatedPayload,
  UnsupportedVersion,
  DimOverflow,
  BadHeader,
  SchemaError,
  InvariantViolation,
  MissingFile,
  IoError,
};

std::string_view to_string(Errc code);

// Errors caused by bad inputs or configuration, as opposed to numerical
// failures hit while computing on otherwise well-formed data.
bool is_validation_error(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

  // Prefix the message with the pipeline stage or location that failed.
  Error annotated(std::string_view context) const;

 private:
  Errc code_;
};

}  // namespace mixda
