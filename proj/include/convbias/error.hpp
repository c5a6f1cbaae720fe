#ifndef CONVBIAS_ERROR_HPP
#define CONVBIAS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace convbias {

/// Broad failure class; the CLI maps it to a process exit code.
enum class ErrorKind {
  configuration,  // bad user input or unsatisfiable preconditions
  numerical,      // algorithm could not produce a trustworthy result
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::configuration, what) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what)
      : Error(ErrorKind::configuration, what) {}
};

struct ContractViolation : Error {
  explicit ContractViolation(const std::string& what)
      : Error(ErrorKind::configuration, what) {}
};

struct DomainError : Error {
  explicit DomainError(const std::string& what)
      : Error(ErrorKind::configuration, what) {}
};

struct ZeroMatrixError : Error {
  explicit ZeroMatrixError(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

struct MultiplicityError : Error {
  explicit MultiplicityError(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

struct NumericalFailure : Error {
  explicit NumericalFailure(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

/// Thrown when (1 + alpha*sigma_1)^t would leave the representable range.
struct OverflowError : Error {
  OverflowError(const std::string& what, long long max_step)
      : Error(ErrorKind::numerical, what), max_step_(max_step) {}

  /// Largest step count the closed form can evaluate for the same inputs.
  long long advised_max_step() const noexcept { return max_step_; }

 private:
  long long max_step_;
};

}  // namespace convbias

#endif  // CONVBIAS_ERROR_HPP
