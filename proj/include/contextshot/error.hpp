#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cshot {

// Base for every error raised by the library. category() is a short stable
// token used by the CLI for machine-parsable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& m) : Error("domain", m) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& m) : Error("contract", m) {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& m)
      : Error("parse", "line " + std::to_string(line) + ": " + m), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& m) : Error("format", m) {}
};

class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& m) : Error("integrity", m) {}
};

class LookupError : public Error {
 public:
  explicit LookupError(const std::string& m) : Error("lookup", m) {}
};

class EmptyContextError : public Error {
 public:
  EmptyContextError() : Error("empty-context", "context set is empty") {}
};

class SamplingError : public Error {
 public:
  explicit SamplingError(const std::string& m) : Error("sampling", m) {}
};

class SpecError : public Error {
 public:
  explicit SpecError(const std::string& m) : Error("spec", m) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& m) : Error("training", m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace cshot
