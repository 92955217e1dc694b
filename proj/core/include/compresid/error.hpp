#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace compresid {

/// Coarse failure classes; the CLI maps them onto exit codes.
enum class ErrorCategory { usage, data, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Argument outside the domain of a mathematical function.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(ErrorCategory::numerical, what) {}
};

/// Invalid input data. Carries the offending row when one is known.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what,
                     std::optional<std::size_t> row = std::nullopt)
      : Error(ErrorCategory::data,
              row ? what + " (row " + std::to_string(*row) + ")" : what),
        row_(row) {}

  std::optional<std::size_t> row() const noexcept { return row_; }

 private:
  std::optional<std::size_t> row_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what)
      : Error(ErrorCategory::usage, what) {}
};

/// The optimizer could not produce a finite likelihood. Bootstrap loops catch
/// this and redraw the replicate.
class FitError : public Error {
 public:
  explicit FitError(const std::string& what)
      : Error(ErrorCategory::numerical, what) {}
};

/// Observed information is not invertible.
class SingularInformationError : public Error {
 public:
  SingularInformationError(const std::string& what, double condition)
      : Error(ErrorCategory::numerical,
              what + " (condition estimate " + std::to_string(condition) + ")"),
        condition_(condition) {}

  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// A bootstrap replicate (or simulated dataset) kept failing after every retry.
class ReplicateFailureError : public Error {
 public:
  ReplicateFailureError(const std::string& what, std::size_t replicate)
      : Error(ErrorCategory::numerical,
              what + " (replicate " + std::to_string(replicate) + ")"),
        replicate_(replicate) {}

  std::size_t replicate() const noexcept { return replicate_; }

 private:
  std::size_t replicate_;
};

}  // namespace compresid
