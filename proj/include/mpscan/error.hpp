#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mpscan {

enum class ErrorCode {
  TruncatedOption,
  IllegalLength,
  BadSubtype,
  UnknownVersion,
  BadLength,
  IllegalCombination,
  TransportUnavailable,
  GuardViolation,
  EmptyInput,
  MalformedCapture,
  DivisionUndefined,
  MissingTables,
  InsufficientHistory,
  MissingTable,
  PairingMismatch,
  InvalidArgument,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// All recoverable failures in the toolkit carry one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mpscan
