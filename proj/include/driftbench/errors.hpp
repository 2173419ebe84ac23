#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace driftbench {

// Bad or inconsistent configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unrecoverable corruption while reading an entity dump.
class IngestError : public std::runtime_error {
 public:
  IngestError(const std::string& what, std::uint64_t byte_offset)
      : std::runtime_error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::uint64_t byte_offset() const { return byte_offset_; }

 private:
  std::uint64_t byte_offset_;
};

class RenderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed fixture or data file; carries the 1-based line number when known.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Backend could not be reached. Safe to retry: the protocol is stateless.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Backend answered, but the answer violates the wire contract.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(const std::string& what, long expected = -1, long actual = -1)
      : std::runtime_error(expected >= 0
                               ? what + " (expected " + std::to_string(expected) + ", got " +
                                     std::to_string(actual) + ")"
                               : what),
        expected_(expected),
        actual_(actual) {}
  long expected() const { return expected_; }
  long actual() const { return actual_; }

 private:
  long expected_;
  long actual_;
};

// An upstream filter contract was violated (e.g. probing a query with no single-token gold).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace driftbench
