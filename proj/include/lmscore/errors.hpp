#pragma once

#include <stdexcept>
#include <string>

namespace lmscore {

// Base class for every error raised by the library. The CLI maps any
// lmscore::Error to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed vocabulary, weight, config or dataset file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Tensor missing, wrong shape, or blob size disagrees with the manifest.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters (divisibility, non-positive sizes, unknown tags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Word or span that cannot be located in an encoding.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Restricted-vocabulary token that is OOV or splits into several pieces.
class VocabularyError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied input violates a precondition (empty batch, overlong
// sequence, out-of-range id, bad k, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace lmscore
