#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvcn {

enum class ErrorKind {
  NonFiniteInput,
  ShapeMismatch,
  DerivativeUnavailable,
  GridMismatch,
  NonFiniteState,
  LengthMismatch,
  UnsupportedSize,
  NotInitialized,
  PilotOutOfSync,
  MissingDerivative,
  EllipticityFailure,
  Config,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library. `index()` carries the offending
/// particle (or -1 when not applicable).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, long index = -1);

  ErrorKind kind() const noexcept { return kind_; }
  long index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  long index_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what, long index = -1);

}  // namespace mvcn
