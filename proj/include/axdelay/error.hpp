#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace axdelay {

enum class ErrorCode {
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  TrailingData,
  ChannelOutOfRange,
  InvalidDuration,
  MissingFile,
  ManifestInvalid,
  ShapeMismatch,
  TraceMissing,
  NonConvergence,
  ConfigInvalid,
  DatasetMissing,
  VersionMismatch,
  CorruptPayload,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so callers
// (tests, the CLI exit-code mapping) can branch on it without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace axdelay
