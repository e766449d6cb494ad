#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ekd {

enum class ErrorCode {
  NegativeEntry,
  ZeroSum,
  LengthTooSmall,
  NotNormalized,
  NonPositiveTemperature,
  NegativeWeight,
  LengthMismatch,
  InfiniteDivergence,
  VocabTooSmall,
  EmptyEnsemble,
  ZeroProbabilityForGeometric,
  DimensionMismatch,
  InvalidOperator,
  NoEligibleTokenPair,
  ZeroProbabilityAtTruth,
  BaseTooCloseToBoundary,
  ExcessiveRejection,
  DegenerateCase,
  InvalidArgument,
  Divergence,
  MissingTruth,
  ParseError,
  InconsistentTeacherSet,
  InconsistentVocabSize,
  InvalidDistribution,
  ConfigInvalid,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure in the library surfaces as an ekd::Error carrying a code the
// CLI and the tests can match on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace ekd
