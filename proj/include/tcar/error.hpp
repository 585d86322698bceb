#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tcar {

// Base for every error raised by the library. `kind()` is a stable
// machine-readable tag used by the service wire protocol and the CLI.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TCAR_DEFINE_ERROR(Name, tag)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(tag, message) {} \
  };

TCAR_DEFINE_ERROR(EmptyInputError, "empty-input")
TCAR_DEFINE_ERROR(IndexOutOfRangeError, "index-out-of-range")
TCAR_DEFINE_ERROR(EmptyCorpusError, "empty-corpus")
TCAR_DEFINE_ERROR(UnknownLabelError, "unknown-label")
TCAR_DEFINE_ERROR(InsufficientExamplesError, "insufficient-examples")
TCAR_DEFINE_ERROR(LengthMismatchError, "length-mismatch")
TCAR_DEFINE_ERROR(ModelFormatError, "model-format")
TCAR_DEFINE_ERROR(ModelNotLoadedError, "model-not-loaded")
TCAR_DEFINE_ERROR(IoError, "io")
TCAR_DEFINE_ERROR(FormatError, "format")
TCAR_DEFINE_ERROR(InconsistentEffectError, "inconsistent-effect")
TCAR_DEFINE_ERROR(MissingSlotError, "missing-slot")
TCAR_DEFINE_ERROR(UnknownConstantError, "unknown-constant")
TCAR_DEFINE_ERROR(UnsupportedRequirementError, "unsupported-requirement")
TCAR_DEFINE_ERROR(BudgetExhaustedError, "budget-exhausted")
TCAR_DEFINE_ERROR(UnknownWorldError, "unknown-world")
TCAR_DEFINE_ERROR(UnknownSessionError, "unknown-session")
TCAR_DEFINE_ERROR(SessionTerminatedError, "session-terminated")
TCAR_DEFINE_ERROR(ProtocolError, "protocol")

#undef TCAR_DEFINE_ERROR

// PDDL syntax error with 1-based source position.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& message, std::size_t line, std::size_t column)
      : Error("syntax", message + " at line " + std::to_string(line) +
                            ", column " + std::to_string(column)),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace tcar
