#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace modeldisc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LoadError : public Error {
 public:
  enum class Kind { Io, Parse, TooFewRows, NonFiniteValue, Degenerate };

  LoadError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Syntax error in a kernel or function expression; `position` is a byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position = 0, std::string raw = {})
      : Error(what), position_(position), raw_(std::move(raw)) {}
  std::size_t position() const noexcept { return position_; }
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::size_t position_;
  std::string raw_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  FitError(const std::string& what, std::vector<std::string> diagnostics = {})
      : Error(what), diagnostics_(std::move(diagnostics)) {}
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

class RenderError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class ApiError : public Error {
 public:
  ApiError(int status, const std::string& body_excerpt)
      : Error("api error " + std::to_string(status) + ": " + body_excerpt),
        status_(status),
        body_excerpt_(body_excerpt) {}
  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ToolError : public Error {
 public:
  using Error::Error;
};

class RunError : public Error {
 public:
  using Error::Error;
};

}  // namespace modeldisc
