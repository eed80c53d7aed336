#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dfnsm {

// Malformed input text (bad field count, non-numeric ids, ...).
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, std::size_t line_number)
      : std::runtime_error("line " + std::to_string(line_number) + ": " + msg),
        line(line_number) {}
  std::size_t line;
};

// Well-formed input that violates a domain invariant (rating out of range,
// empty genre list, shape mismatch, ...).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sequence too short to split into prefix + holdout.
struct InsufficientHistoryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing/truncated/corrupt files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training loss became non-finite.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& msg, int epoch_number)
      : std::runtime_error(msg + " (epoch " + std::to_string(epoch_number) + ")"),
        epoch(epoch_number) {}
  int epoch;
};

}  // namespace dfnsm
