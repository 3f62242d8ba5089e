#pragma once

#include <stdexcept>
#include <string>

namespace firelgcp {

/// Invalid input, configuration or parameters. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Numerical failure (non-convergence, failed factorization, overflow).
/// Maps to CLI exit code 3. `diagnostics` carries a free-form trace.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::string diagnostics = {})
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

}  // namespace firelgcp
