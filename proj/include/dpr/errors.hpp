#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpr {

/// All logits of a softmax were -inf sentinels: no distribution left.
struct DegenerateDistributionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input text; carries the 1-based line number.
struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

/// Structurally well-formed input that violates a cross-reference rule.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BankLoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A category requested from the bank has no patches at all.
struct NoCandidatesError : std::runtime_error {
  int category;
  NoCandidatesError(int category_, const std::string& msg)
      : std::runtime_error(msg), category(category_) {}
};

struct TrainingDivergedError : std::runtime_error {
  std::size_t step;
  TrainingDivergedError(std::size_t step_, const std::string& msg)
      : std::runtime_error(msg + " (step " + std::to_string(step_) + ")"), step(step_) {}
};

/// Gradient verification could not be carried out (non-finite values).
struct CheckFailedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A loss term outside the retrieval scope was given a nonzero weight.
struct UnsupportedTermError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dpr
