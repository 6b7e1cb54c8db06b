#pragma once

#include <stdexcept>
#include <string>

namespace ssdiff {

// Failure categories double as CLI exit codes.
enum class ErrorCategory : int {
  config = 1,
  io = 2,
  protocol = 3,
  numeric = 4,
  selftest = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

struct ProtocolError : Error {
  explicit ProtocolError(const std::string& what) : Error(ErrorCategory::protocol, what) {}
};

// Distinct protocol failure modes of the remote denoiser.
struct ConnectionError : ProtocolError {
  explicit ConnectionError(const std::string& what) : ProtocolError(what) {}
};

struct TimeoutError : ProtocolError {
  explicit TimeoutError(const std::string& what) : ProtocolError(what) {}
};

struct ServerError : ProtocolError {
  explicit ServerError(const std::string& what) : ProtocolError(what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

// Shape or argument contract violations inside the library.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace ssdiff
