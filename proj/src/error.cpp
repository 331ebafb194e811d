#include "axdelay/error.hpp"

namespace axdelay {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TrailingData: return "TrailingData";
    case ErrorCode::ChannelOutOfRange: return "ChannelOutOfRange";
    case ErrorCode::InvalidDuration: return "InvalidDuration";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ManifestInvalid: return "ManifestInvalid";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TraceMissing: return "TraceMissing";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::DatasetMissing: return "DatasetMissing";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptPayload: return "CorruptPayload";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace axdelay
