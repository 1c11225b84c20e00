#include "mvcn/errors.hpp"

namespace mvcn {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DerivativeUnavailable: return "DerivativeUnavailable";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::UnsupportedSize: return "UnsupportedSize";
    case ErrorKind::NotInitialized: return "NotInitialized";
    case ErrorKind::PilotOutOfSync: return "PilotOutOfSync";
    case ErrorKind::MissingDerivative: return "MissingDerivative";
    case ErrorKind::EllipticityFailure: return "EllipticityFailure";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what, long index)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), index_(index) {}

void fail(ErrorKind kind, const std::string& what, long index) { throw Error(kind, what, index); }

}  // namespace mvcn
