#pragma once

#include <stdexcept>
#include <string>

namespace engage {

/// Process exit codes shared by every CLI subcommand.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kInternal = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad flags, bad config documents, out-of-range parameters.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kUsage, what) {}
};

/// Malformed or unusable input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// Structural problem with a log file (missing header columns and the like).
class FormatError : public DataError {
 public:
  explicit FormatError(const std::string& what) : DataError(what) {}
};

/// A library invariant was violated; indicates a bug, not bad input.
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(ExitCode::kInternal, what) {}
};

}  // namespace engage
