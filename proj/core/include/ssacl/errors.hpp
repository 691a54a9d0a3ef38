#pragma once

#include <stdexcept>
#include <string>

namespace ssacl {

// Config/document violations; CLI maps these to exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingLeafError : ValidationError {
  using ValidationError::ValidationError;
};

struct UnknownPathologyError : ValidationError {
  using ValidationError::ValidationError;
};

// Runtime failures; CLI maps these to exit code 2.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyMaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CoverageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BatchTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateBox : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ssacl
