#include "scmrl/error.hpp"

namespace scmrl {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::CyclicGraph: return "CyclicGraph";
    case ErrorCode::IllegalParent: return "IllegalParent";
    case ErrorCode::IncompleteTable: return "IncompleteTable";
    case ErrorCode::UnnormalizedNoise: return "UnnormalizedNoise";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NotAFactor: return "NotAFactor";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::TooFewCodes: return "TooFewCodes";
    case ErrorCode::AssignmentInvalid: return "AssignmentInvalid";
    case ErrorCode::Unnormalized: return "Unnormalized";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ZeroLikelihood: return "ZeroLikelihood";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BrokenChain: return "BrokenChain";
    case ErrorCode::EmptySources: return "EmptySources";
    case ErrorCode::MissingBehaviorProb: return "MissingBehaviorProb";
    case ErrorCode::NaturalSourceRejected: return "NaturalSourceRejected";
    case ErrorCode::MissingSource: return "MissingSource";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::TaskMismatch: return "TaskMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "UnknownError";
}

}  // namespace scmrl
