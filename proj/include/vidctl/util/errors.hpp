#pragma once

#include <stdexcept>
#include <string>

namespace vidctl::util {

// Violated precondition or invariant (bad shapes, out-of-range values).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class EmptyInputError : public std::runtime_error {
 public:
  explicit EmptyInputError(const std::string& msg) : std::runtime_error(msg) {}
};

class InsufficientFramesError : public std::runtime_error {
 public:
  explicit InsufficientFramesError(const std::string& msg) : std::runtime_error(msg) {}
};

class GeometryError : public std::runtime_error {
 public:
  explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

// Encoder/decoder subprocess or library failure, with captured diagnostics.
class BridgeError : public std::runtime_error {
 public:
  explicit BridgeError(const std::string& msg) : std::runtime_error(msg) {}
};

class BitstreamParseError : public std::runtime_error {
 public:
  explicit BitstreamParseError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vidctl::util
