#pragma once

#include <stdexcept>
#include <string>

namespace mdfl {

/// Bad user input: flags, config documents, incompatible files. The CLI maps
/// this family to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Problems with on-disk scene data.
class DataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingFileError : public DataError {
 public:
  using DataError::DataError;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class LabelRangeError : public DataError {
 public:
  using DataError::DataError;
};

/// Training failed at run time (divergence, non-finite samples).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mdfl
