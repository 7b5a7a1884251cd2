#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gelfand {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the inputs was violated (bad radius, wrong grid kind, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Grid too small for the requested stencil.
class DegenerateGrid : public Error {
 public:
  using Error::Error;
};

/// Weighted integral whose weight is not integrable against the given field.
class NonIntegrable : public Error {
 public:
  using Error::Error;
};

/// A linear or nonlinear solve failed. `module` names the originating module.
class SolverError : public Error {
 public:
  SolverError(std::string module, const std::string& what)
      : Error(module + ": " + what), module_(std::move(module)) {}
  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Expression or configuration text that does not parse.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error(what + " at line " + std::to_string(line) + ", column " +
              std::to_string(column)),
        line_(line),
        column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace gelfand
