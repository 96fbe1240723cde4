#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nmneval {

/// Bad user input: malformed files, unknown names, schema violations.
/// The CLI maps these to exit code 2; anything else is an internal error (3).
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Syntax error in a program string; offset is a 0-based character position.
class ParseError : public ValidationError {
  public:
    ParseError(const std::string& what, std::size_t offset)
        : ValidationError(what + " (at offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const { return offset_; }

  private:
    std::size_t offset_;
};

/// Type error in a parsed program; message lists every offending node id.
class TypecheckError : public ValidationError {
  public:
    explicit TypecheckError(const std::string& what) : ValidationError(what) {}
};

}  // namespace nmneval
