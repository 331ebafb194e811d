#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace axdelay {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> data;

  bool operator==(const NamedArray&) const = default;
};

/// Versioned container: a text header (metadata, blob and array directory,
/// payload length, FNV-1a checksum) followed by the raw payload: blobs as
/// bytes, arrays as little-endian IEEE-754 doubles in declared order.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::map<std::string, std::string> meta;
  std::map<std::string, std::string> blobs;  // e.g. config JSON, config source text
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
  const std::string& meta_value(const std::string& key) const;

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

/// Writes to a temporary sibling then renames, so readers never see a partial file.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace axdelay
