#pragma once

#include <stdexcept>
#include <string>

namespace mgm {

// Error taxonomy shared by the library and the CLI exit-code mapping:
// IoError -> 2, FormatError/ValidationError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed input file contents (magic, header fields, payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class SizeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class NonFiniteError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Precondition or configuration violation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Runtime numeric failure (divergence, non-finite intermediate).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mgm
