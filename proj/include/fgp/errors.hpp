#pragma once

#include <stdexcept>
#include <string>

namespace fgp {

// Error code carried by every toolkit exception; machine command replies
// and CLI diagnostics map these to short textual codes.
enum class ErrorCode {
  Dimension,
  Singular,
  DivideByZero,
  Decode,
  Syntax,
  Capacity,
  AddressFault,
  Busy,
  Size,
  Argument,
  Io,
  Runtime,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Dimension: return "DIM";
    case ErrorCode::Singular: return "SINGULAR";
    case ErrorCode::DivideByZero: return "DIVZERO";
    case ErrorCode::Decode: return "DECODE";
    case ErrorCode::Syntax: return "SYNTAX";
    case ErrorCode::Capacity: return "CAPACITY";
    case ErrorCode::AddressFault: return "ADDR";
    case ErrorCode::Busy: return "BUSY";
    case ErrorCode::Size: return "SIZE";
    case ErrorCode::Argument: return "ARG";
    case ErrorCode::Io: return "IO";
    case ErrorCode::Runtime: return "RUNTIME";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what)
      : Error(ErrorCode::Dimension, what) {}
};

struct SingularError : Error {
  explicit SingularError(const std::string& what)
      : Error(ErrorCode::Singular, what) {}
};

struct DivideByZeroError : Error {
  explicit DivideByZeroError(const std::string& what)
      : Error(ErrorCode::DivideByZero, what) {}
};

struct DecodeError : Error {
  explicit DecodeError(const std::string& what)
      : Error(ErrorCode::Decode, what) {}
};

struct SyntaxError : Error {
  SyntaxError(int line, const std::string& what)
      : Error(ErrorCode::Syntax, "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct CapacityError : Error {
  explicit CapacityError(const std::string& what)
      : Error(ErrorCode::Capacity, what) {}
};

struct AddressFault : Error {
  explicit AddressFault(const std::string& what)
      : Error(ErrorCode::AddressFault, what) {}
};

struct BusyError : Error {
  explicit BusyError(const std::string& what) : Error(ErrorCode::Busy, what) {}
};

struct SizeError : Error {
  explicit SizeError(const std::string& what) : Error(ErrorCode::Size, what) {}
};

}  // namespace fgp
