#pragma once

#include <stdexcept>
#include <string>

namespace vcfl {

// Bad input, bad configuration, or a violated precondition. The CLI maps this
// to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or failed numeric checks at run time.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vcfl
