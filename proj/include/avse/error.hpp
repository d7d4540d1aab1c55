#pragma once

#include <stdexcept>
#include <string>

namespace avse {

// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  InvalidArgument,   // precondition violated by the caller
  Io,                // open/read/write/rename failed
  NotFound,          // input file does not exist
  MalformedHeader,   // container header unreadable
  Multichannel,      // more than one audio channel
  UnsupportedCodec,  // codec other than PCM16 / float32
  Format,            // magic mismatch, bad enum value
  Truncated,         // payload shorter than its header promises
  ShapeMismatch,     // tensor / matrix dimensions disagree
  Numeric,           // NaN or Inf where finite values are required
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::NotFound: return "not found";
    case ErrorKind::MalformedHeader: return "malformed header";
    case ErrorKind::Multichannel: return "multichannel unsupported";
    case ErrorKind::UnsupportedCodec: return "unsupported codec";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::Numeric: return "numeric failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace avse
