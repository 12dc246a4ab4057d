#ifndef NIFFLOW_ERROR_HPP
#define NIFFLOW_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace nifflow {

enum class ErrorKind {
  parse,
  shape_mismatch,
  invalid_argument,
  estimator,
  io,
  unsupported,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// All library failures are reported through this type; `kind()` is stable
/// and is what the CLI prints in its machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace nifflow

#endif  // NIFFLOW_ERROR_HPP
