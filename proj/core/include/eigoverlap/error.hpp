#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace eigoverlap {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidDimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. `line()` is 1-based, 0 when the error is not tied
/// to a particular line (e.g. the file could not be opened).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// The self-consistent iteration did not reach tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::complex<double> z, double residual)
      : Error(what), z_(z), residual_(residual) {}
  std::complex<double> z() const noexcept { return z_; }
  double residual() const noexcept { return residual_; }

 private:
  std::complex<double> z_;
  double residual_;
};

class NearResonanceError : public Error {
 public:
  using Error::Error;
};

class RealizationError : public Error {
 public:
  RealizationError(const std::string& what, std::uint64_t index)
      : Error(what + " (realization " + std::to_string(index) + ")"), index_(index) {}
  std::uint64_t index() const noexcept { return index_; }

 private:
  std::uint64_t index_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IncompatibleCheckpointError : public Error {
 public:
  using Error::Error;
};

class ComparisonError : public Error {
 public:
  using Error::Error;
};

class MissingArtifactsError : public Error {
 public:
  using Error::Error;
};

}  // namespace eigoverlap
