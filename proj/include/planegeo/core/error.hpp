#pragma once

#include <stdexcept>
#include <string>

namespace planegeo {

enum class ErrorKind {
  Bounds,
  Shape,
  InsufficientData,
  Degenerate,
  EmptyScene,
  Capacity,
  Input,
  Dependency,
  Unobservable,
  Io,
  Adapter,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Bounds: return "bounds";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::EmptyScene: return "empty-scene";
    case ErrorKind::Capacity: return "capacity";
    case ErrorKind::Input: return "input";
    case ErrorKind::Dependency: return "dependency";
    case ErrorKind::Unobservable: return "unobservable";
    case ErrorKind::Io: return "io";
    case ErrorKind::Adapter: return "adapter";
  }
  return "unknown";
}

/// Single exception type for the library; `kind()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace planegeo
