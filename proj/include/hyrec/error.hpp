#pragma once

#include <stdexcept>
#include <string>

namespace hyrec {

// Exit codes of the command-line tool map onto these categories.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid grid, config, expression or argument combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Fewer functionals than the reconstruction mode needs.
class MeasurementCountError : public ConfigError {
 public:
  MeasurementCountError(const std::string& what, int required, int supplied)
      : ConfigError(what), required_(required), supplied_(supplied) {}
  int required() const noexcept { return required_; }
  int supplied() const noexcept { return supplied_; }

 private:
  int required_;
  int supplied_;
};

class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : ConfigError(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Coefficient sample violating the forward model (non-SPD a).
class AssemblyError : public Error {
 public:
  using Error::Error;
};

/// Singular operator or a solve that did not reach tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A sufficient condition for reconstruction does not hold (vanishing H_1,
/// degenerate gradient basis, dependent M matrices, too many masked points).
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Resolved gauge quantity violates its constraint (e.g. B <= 0).
class ResolutionError : public Error {
 public:
  using Error::Error;
};

}  // namespace hyrec
