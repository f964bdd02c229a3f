#pragma once

#include <stdexcept>
#include <string>

namespace vdm {

/// Bad or inconsistent configuration (unknown key, invariant violation, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file. line == 0 means "no line information".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Numeric routine failed to converge or produced an unusable result.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filter covariance lost positive definiteness beyond repair.
class FilterDivergence : public NumericError {
 public:
  explicit FilterDivergence(const std::string& msg) : NumericError(msg) {}
};

}  // namespace vdm
