#pragma once

#include <stdexcept>
#include <string>

namespace plumetrace {

/// Base class for every failure raised by the library. The CLI maps the
/// concrete subclass onto a process exit code (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or malformed configuration / header keys, missing input files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a container invariant (sizes, ordering, finiteness).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Operation called outside its mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown that should be unreachable on valid input.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline int exit_code(const Error& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 3;
}

}  // namespace plumetrace
