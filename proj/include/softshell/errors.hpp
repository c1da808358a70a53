#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace softshell {

// Error hierarchy. The CLI maps each category to a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid numeric parameters or configuration values.
class ParameterError : public Error {
 public:
  using Error::Error;
};

class StructuralError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class SingularElementError : public Error {
 public:
  using Error::Error;
};

class InvertedElementError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

class StagnationError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

class EmptyPatchError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class VersionError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace softshell
