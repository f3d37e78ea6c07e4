#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace snp {

enum class ErrorCode {
  BehindCamera,
  SingularIntrinsics,
  InvalidCamera,
  EmptyInput,
  DimMismatch,
  DimError,
  NotUnit,
  InvalidBounds,
  ShapeMismatch,
  StaleGraph,
  OutOfImage,
  TooSmall,
  ParseError,
  UnsupportedProperty,
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// ParseError that remembers where in the byte stream it happened.
class ParseError : public Error {
 public:
  ParseError(std::size_t byte_offset, const std::string& what)
      : Error(ErrorCode::ParseError, what + " (at byte " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

#define SNP_CHECK(cond, code, msg)              \
  do {                                          \
    if (!(cond)) throw ::snp::Error((code), (msg)); \
  } while (0)

}  // namespace snp
