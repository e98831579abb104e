#pragma once

#include <stdexcept>
#include <string>

namespace dub {

/// Base of every domain error raised by the library. The CLI maps these to
/// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file/wire content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (missing file, unwritable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A value violates an operation's precondition or a type invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Pipeline construction failed (type-incompatible stages, bad config).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stage reported an error or crashed while the pipeline ran.
class StageError : public Error {
 public:
  using Error::Error;
};

/// External-stage wire protocol violation: bad hello, version mismatch,
/// timeout, unexpected exit.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace dub
