#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace causalfm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A problem found while reading a document. `line` is 1-based, 0 when the
// problem is not tied to a single line.
class ParseError : public Error {
 public:
  enum class Kind {
    syntax,
    duplicate_variable,
    unknown_variable,
    self_loop,
    cycle,
    invalid_value,
  };

  ParseError(Kind kind, std::string source, std::size_t line, const std::string& message)
      : Error(source + ":" + std::to_string(line) + ": " + message),
        kind_(kind),
        source_(std::move(source)),
        line_(line) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::string source_;
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace causalfm
