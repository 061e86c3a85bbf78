#pragma once

#include <stdexcept>
#include <string>

namespace vas {

// Root of every error raised by the library. Callers that only care about
// "something in vasamp failed" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VASAMP_DEFINE_ERROR(Name)   \
  class Name : public Error {       \
   public:                          \
    using Error::Error;             \
  }

// Sequence MDP
VASAMP_DEFINE_ERROR(InvalidArgumentError);
VASAMP_DEFINE_ERROR(InvalidTokenError);
VASAMP_DEFINE_ERROR(TerminalStateError);
VASAMP_DEFINE_ERROR(NonTerminalError);
VASAMP_DEFINE_ERROR(ZeroMassError);

// Oracles
VASAMP_DEFINE_ERROR(StateSpaceTooLargeError);
VASAMP_DEFINE_ERROR(BetaUnderflowError);
VASAMP_DEFINE_ERROR(SupportViolationError);
VASAMP_DEFINE_ERROR(DimensionMismatchError);

// Value estimation
VASAMP_DEFINE_ERROR(EmptyDatasetError);
VASAMP_DEFINE_ERROR(DivergenceError);
VASAMP_DEFINE_ERROR(NonFiniteGradientError);
VASAMP_DEFINE_ERROR(ModeUnavailableError);

// Decoding
VASAMP_DEFINE_ERROR(NonFiniteError);
VASAMP_DEFINE_ERROR(EmptyCompositionError);
VASAMP_DEFINE_ERROR(EmptyCandidateError);
VASAMP_DEFINE_ERROR(ClassifierRangeError);

// Evaluation
VASAMP_DEFINE_ERROR(MissingFieldError);
VASAMP_DEFINE_ERROR(LengthMismatchError);

// Serialization and configuration
VASAMP_DEFINE_ERROR(FormatError);
VASAMP_DEFINE_ERROR(ConfigError);
VASAMP_DEFINE_ERROR(MissingArtifactError);

#undef VASAMP_DEFINE_ERROR

}  // namespace vas
