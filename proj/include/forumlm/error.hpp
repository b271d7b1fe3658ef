#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace forumlm {

// Base of every error thrown by the library. `module()` names the component
// that raised it so the CLI can report "module: cause".
class Error : public std::runtime_error {
public:
  Error(std::string module, const std::string &what)
      : std::runtime_error(what), module_(std::move(module)) {}

  const std::string &module() const noexcept { return module_; }

private:
  std::string module_;
};

// Input that does not follow a documented file format.
class ParseError : public Error {
public:
  ParseError(std::string module, std::size_t line, const std::string &what)
      : Error(std::move(module), "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

// Well-formed input that violates a domain invariant or precondition.
class ValidationError : public Error {
public:
  using Error::Error;
};

} // namespace forumlm
