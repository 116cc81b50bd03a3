#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gnnforge {

/// Malformed text input; carries the 1-based line number that failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A node id, label, or index outside its declared range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Operand shapes that do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input that makes the requested quantity undefined (e.g. an empty matrix).
class DegenerateInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Broken caller contract, e.g. a Max backward without its argmax record.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gnnforge
