#pragma once

#include <stdexcept>
#include <string>

namespace bathlab {

// Base of every failure the library reports. Argument-domain violations on
// constructors use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StepTooLarge : public Error {
 public:
  using Error::Error;
};

class NearDegenerateRoots : public Error {
 public:
  using Error::Error;
};

class SingularDenominator : public Error {
 public:
  using Error::Error;
};

class QuadratureFailure : public Error {
 public:
  using Error::Error;
};

class DegenerateCovariance : public Error {
 public:
  using Error::Error;
};

class NonPositiveValue : public Error {
 public:
  using Error::Error;
};

class GridTooCoarse : public Error {
 public:
  using Error::Error;
};

class RegimeMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace bathlab
