#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace figcap {

// Bad argument to an operation (n = 0, empty candidate list, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A normalizer could not be applied (e.g. length-ratio with an empty reference).
class NormalizationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed input. line() is 1-based, 0 when not tied to a line.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed lines that violate corpus-level constraints (duplicate ids).
class CorpusError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Streams that should carry the same ids do not.
class AlignmentError : public std::runtime_error {
 public:
  AlignmentError(const std::string& what, std::string id)
      : std::runtime_error(what), id_(std::move(id)) {}

  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

// No figure/table reference could be found in the mentions.
class NoReferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened/read/written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace figcap
