#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace srcrec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, mismatched sizes, empty subdomains, and similar caller errors.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Iterative or direct solver failed to reach its tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Configuration text that cannot be parsed or validated.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace srcrec
