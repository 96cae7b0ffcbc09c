#pragma once

#include <stdexcept>
#include <string>

namespace carbonsim {

// Base of every error the library raises. The CLI maps subclasses onto exit
// codes: ModelError -> 1, everything else -> 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input document (JSON/CSV syntax, missing fields, bad types).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input parsed but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Reference to an id (gpu, model, region, instance) that is not declared.
class UnknownIdError : public Error {
 public:
  using Error::Error;
};

// Batch size outside the measured range of a profile series.
class OutOfRangeError : public Error {
 public:
  using Error::Error;
};

// Runtime model failures: the configuration is well formed but cannot be
// served or solved.
class ModelError : public Error {
 public:
  using Error::Error;
};

class OomError : public ModelError {
 public:
  using ModelError::ModelError;
};

class SloInfeasibleError : public ModelError {
 public:
  using ModelError::ModelError;
};

class CalibrationError : public ModelError {
 public:
  using ModelError::ModelError;
};

}  // namespace carbonsim
