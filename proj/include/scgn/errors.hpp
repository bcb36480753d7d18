#pragma once

#include <stdexcept>
#include <string>

namespace scgn {

/// Invalid argument values or shapes handed to a numeric operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Rejected run or split configuration; the message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A file could not be opened, read or written; the message names the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The episode sampler could not satisfy a class or sample count.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss during optimization.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Violation of the incremental-session contract (class collisions, unseen test labels).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scgn
