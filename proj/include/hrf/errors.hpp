#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hrf {

/// Shape or channel mismatch between operands.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid argument value (empty input, non-positive horizon, ...).
class InputError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed series file. `line()` is 1-based; 0 when the problem is not tied to a line.
class IngestionError : public std::runtime_error {
  public:
    IngestionError(const std::string& what, std::size_t line)
        : std::runtime_error(what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

/// Zero variance or zero range where a scale is required.
class DegenerateError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InsufficientDataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Division by a zero true value in a relative metric.
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

class EvaluationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// An iterative fit ran out of iterations or produced no usable model.
class FitFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class TrainingDivergence : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace hrf
