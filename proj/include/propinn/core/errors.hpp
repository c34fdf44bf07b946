#pragma once

#include <stdexcept>
#include <string>

namespace propinn {

/// Invalid configuration: dimension mismatches, bad sizes, unknown names.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A primitive that cannot carry the requested derivative information
/// (e.g. relu under input jets).
class UnsupportedPrimitive : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A residual asked for input derivatives above second order.
class UnsupportedOrder : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Parameter step produced a non-finite model output.
class StepTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative solver update norm kept growing.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Division by a vanishing normaliser (e.g. all-zero reference field).
class DegenerateReference : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace propinn
