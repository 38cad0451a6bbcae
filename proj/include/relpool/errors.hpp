#pragma once

#include <stdexcept>
#include <string>

namespace relpool {

/// Precondition violated by the caller (shape, range, label, empty input).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input is well-formed but geometrically degenerate (zero-norm vectors).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Non-finite values or a failed factorization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON corpus, binary blob, config).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace relpool
