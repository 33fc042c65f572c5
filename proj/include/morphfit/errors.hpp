#pragma once

#include <stdexcept>
#include <string>

namespace morphfit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Point configuration too degenerate to define a similarity (collinear,
/// coincident, or all weight on too few points).
class DegenerateConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be symmetric positive-definite is not.
class NotPositiveDefiniteError : public Error {
 public:
  using Error::Error;
};

/// A normal-equation system has no unique solution.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

/// A frame of a tracked sequence failed; wraps the underlying error.
class TrackingError : public Error {
 public:
  TrackingError(int frame, const std::string& what)
      : Error("frame " + std::to_string(frame) + ": " + what), frame_(frame) {}

  /// 1-based frame index.
  int frame() const { return frame_; }

 private:
  int frame_;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-specific.
class FormatError : public Error {
 public:
  enum class Kind {
    kBadHeader,
    kNonNumeric,
    kDuplicate,
    kMissingLandmark,
    kInconsistent,
    kTruncated,
    kUnsupported,
    kUnknownKey,
    kTypeMismatch,
    kOutOfRange,
    kIo,
  };

  FormatError(Kind kind, std::size_t line, const std::string& what)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        kind_(kind),
        line_(line) {}

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

}  // namespace morphfit
