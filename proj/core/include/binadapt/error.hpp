#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace binadapt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes disagree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Misuse of a Graph: unbound inputs, backward before forward, bad node ids.
class GraphError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents. `offset` is the byte position where parsing failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// A histogram with zero variance was handed to a correlation measure.
class DegenerateDistributionError : public Error {
 public:
  using Error::Error;
};

}  // namespace binadapt
