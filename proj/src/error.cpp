#include "mpscan/error.hpp"

namespace mpscan {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::TruncatedOption: return "TruncatedOption";
    case ErrorCode::IllegalLength: return "IllegalLength";
    case ErrorCode::BadSubtype: return "BadSubtype";
    case ErrorCode::UnknownVersion: return "UnknownVersion";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::IllegalCombination: return "IllegalCombination";
    case ErrorCode::TransportUnavailable: return "TransportUnavailable";
    case ErrorCode::GuardViolation: return "GuardViolation";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MalformedCapture: return "MalformedCapture";
    case ErrorCode::DivisionUndefined: return "DivisionUndefined";
    case ErrorCode::MissingTables: return "MissingTables";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::MissingTable: return "MissingTable";
    case ErrorCode::PairingMismatch: return "PairingMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace mpscan
