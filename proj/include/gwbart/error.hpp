#pragma once

#include <stdexcept>
#include <string>

namespace gwbart {

// Bad argument or configuration (alpha out of range, T = 0, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A prior draw grew past the node cap.
class TruncationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tree and design disagree (threshold not an eligible observed value, ...).
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Request is too large for the data (n < 2^{sp}) or for exact enumeration.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tied coordinates make a median split impossible.
class DegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gwbart
