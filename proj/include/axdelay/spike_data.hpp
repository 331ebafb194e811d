#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "axdelay/matrix.hpp"

namespace axdelay {

struct Event {
  std::uint32_t time_us = 0;
  std::uint16_t channel = 0;

  bool operator==(const Event&) const = default;
};

/// Raw address-event stream of one utterance/sample.
struct EventStream {
  std::vector<Event> events;
  std::uint16_t channel_count = 0;
  std::uint32_t duration_us = 0;

  bool operator==(const EventStream&) const = default;
};

/// Spike counts binned on the simulation grid: values(channel, step).
struct SpikeTensor {
  Matrix values;
  double dt_ms = 1.0;

  std::size_t channels() const { return values.rows(); }
  std::size_t timesteps() const { return values.cols(); }
};

struct ManifestEntry {
  std::filesystem::path path;
  int label = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int num_classes = 0;
  int channel_count = 0;
};

// Event file codec. Layout (little-endian): "SPK1", u16 version=1,
// u16 channel_count, u32 event_count, u32 duration_us, then event_count
// records of (u32 time_us, u16 channel).
inline constexpr std::uint16_t kEventFileVersion = 1;
inline constexpr std::size_t kEventHeaderBytes = 16;
inline constexpr std::size_t kEventRecordBytes = 6;

EventStream decode_events(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_events(const EventStream& stream);

EventStream load_events(const std::filesystem::path& path);
void write_events(const EventStream& stream, const std::filesystem::path& path);

/// Bins events into counts at resolution dt_ms; events at or past
/// timesteps*dt_ms are dropped. With binary set, counts are clamped to 1.
SpikeTensor bin_events(const EventStream& stream, double dt_ms, std::size_t timesteps,
                       bool binary = false);

// Manifest: header "#classes=<K> channels=<C>" then "relative/path<TAB>label"
// lines. Relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Deterministically splits off `fraction` of the entries as a validation set.
std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& manifest,
                                                           double fraction, std::uint64_t seed);

/// Portable permutation: Fisher-Yates driven by mt19937_64 with rejection
/// sampling, so the order is identical on every standard library.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

struct Batch {
  std::vector<SpikeTensor> inputs;
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // manifest positions

  std::size_t size() const { return labels.size(); }
};

struct BinningConfig {
  double dt_ms = 1.0;
  std::size_t timesteps = 1000;
  bool binary = false;
};

/// Single-consumer epoch iterator over a manifest. Event files are read lazily
/// and cached as raw events; binning happens per batch.
class BatchIterator {
 public:
  BatchIterator(DatasetManifest manifest, std::size_t batch_size, bool shuffle,
                std::uint64_t seed, BinningConfig binning);

  /// Positions the iterator at the start of `epoch`.
  void start_epoch(std::uint64_t epoch);
  /// Fills `out` with the next batch; false once the epoch is exhausted.
  bool next(Batch& out);
  /// Advances past `batches` batches of the current epoch without loading them.
  void skip(std::size_t batches);

  std::uint64_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const;
  std::size_t batch_size() const { return batch_size_; }
  const DatasetManifest& manifest() const { return manifest_; }
  const BinningConfig& binning() const { return binning_; }

  /// Order in which the entries of `epoch` are visited.
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;

  const EventStream& events(std::size_t index);

 private:
  DatasetManifest manifest_;
  std::size_t batch_size_;
  bool shuffle_;
  std::uint64_t seed_;
  BinningConfig binning_;

  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::vector<EventStream> cache_;
  std::vector<bool> cached_;
};

}  // namespace axdelay
