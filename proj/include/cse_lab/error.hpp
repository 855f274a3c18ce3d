#pragma once

#include <stdexcept>
#include <string>

namespace cse_lab {

/// Failure categories. The first three and `io` are input errors; the rest
/// report a computation that could not produce a trustworthy result.
enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  cutoff_too_small,
  non_physical,
  infeasible,
  not_converged,
  numerical,
  io,
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::cutoff_too_small: return "cutoff_too_small";
    case ErrorKind::non_physical: return "non_physical";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::not_converged: return "not_converged";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace detail
}  // namespace cse_lab
