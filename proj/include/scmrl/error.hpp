#pragma once

#include <stdexcept>
#include <string>

namespace scmrl {

// Every precondition violation in the library throws Error with one of these
// codes. Tests match on the code, messages are for humans.
enum class ErrorCode {
  // scm
  CyclicGraph,
  IllegalParent,
  IncompleteTable,
  UnnormalizedNoise,
  TooLarge,
  NotAFactor,
  OutOfDomain,
  // disentangle
  DomainMismatch,
  TooFewCodes,
  AssignmentInvalid,
  Unnormalized,
  TooFewSamples,
  // env
  OutOfRange,
  ZeroLikelihood,
  Empty,
  // agents
  ShapeMismatch,
  // replay
  BrokenChain,
  EmptySources,
  MissingBehaviorProb,
  NaturalSourceRejected,
  MissingSource,
  // experiment / io
  ConfigError,
  TaskMismatch,
  IoError,
  ParseError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace scmrl
