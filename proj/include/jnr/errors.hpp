#ifndef JNR_ERRORS_HPP_
#define JNR_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace jnr {

// Errors caused by bad user input (configs, spec files, labels, weights).
// The CLI maps these to exit code 1; everything else is a runtime failure.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnknownClassError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class WeightSimplexError : public ValidationError {
 public:
  WeightSimplexError(const std::string& what, double sum)
      : ValidationError(what), sum_(sum) {}
  double sum() const { return sum_; }

 private:
  double sum_;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ValidationError("line " + std::to_string(line) + ": " + what),
        line_(line),
        detail_(what) {}
  /// Same error attributed to a file: "<source>: line N: what".
  ParseError(const std::string& source, const ParseError& inner)
      : ValidationError(source + ": " + inner.what()),
        line_(inner.line_),
        detail_(inner.detail_) {}
  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jnr

#endif  // JNR_ERRORS_HPP_
