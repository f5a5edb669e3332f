#ifndef XLPOOL_ERROR_HPP_
#define XLPOOL_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace xlpool {

// Base for everything the library throws. The CLI maps IoError to exit
// code 1 and every other Error to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bytes that do not parse (bad magic, truncated header, reserved trit code).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input with the wrong dtype / order / rank / header.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class PairingError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class BuildError : public Error {
 public:
  using Error::Error;
};

}  // namespace xlpool

#endif  // XLPOOL_ERROR_HPP_
