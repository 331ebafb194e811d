#include "axdelay/spike_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "axdelay/error.hpp"

namespace axdelay {

namespace {

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Unbiased integer in [0, bound) from a 64-bit engine.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

EventStream decode_events(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || bytes[0] != 'S' || bytes[1] != 'P' || bytes[2] != 'K' || bytes[3] != '1')
    throw Error(ErrorCode::BadMagic, "missing SPK1 header");
  if (bytes.size() < kEventHeaderBytes) throw Error(ErrorCode::TruncatedFile, "short header");

  const std::uint16_t version = read_u16(bytes, 4);
  if (version != kEventFileVersion)
    throw Error(ErrorCode::UnsupportedVersion, "event file version " + std::to_string(version));

  EventStream stream;
  stream.channel_count = read_u16(bytes, 6);
  const std::uint32_t count = read_u32(bytes, 8);
  stream.duration_us = read_u32(bytes, 12);

  const std::size_t need = kEventHeaderBytes + std::size_t{count} * kEventRecordBytes;
  if (bytes.size() < need)
    throw Error(ErrorCode::TruncatedFile, "header declares " + std::to_string(count) +
                                              " events, payload holds " +
                                              std::to_string((bytes.size() - kEventHeaderBytes) /
                                                             kEventRecordBytes));
  if (bytes.size() > need) throw Error(ErrorCode::TrailingData, "bytes after last event record");

  stream.events.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = kEventHeaderBytes + std::size_t{i} * kEventRecordBytes;
    Event& e = stream.events[i];
    e.time_us = read_u32(bytes, at);
    e.channel = read_u16(bytes, at + 4);
    if (e.channel >= stream.channel_count)
      throw Error(ErrorCode::ChannelOutOfRange,
                  "event " + std::to_string(i) + " on channel " + std::to_string(e.channel) +
                      " >= " + std::to_string(stream.channel_count));
    if (e.time_us > stream.duration_us)
      throw Error(ErrorCode::InvalidDuration, "event time beyond declared duration");
  }
  std::stable_sort(stream.events.begin(), stream.events.end(),
                   [](const Event& a, const Event& b) { return a.time_us < b.time_us; });
  return stream;
}

std::vector<std::uint8_t> encode_events(const EventStream& stream) {
  std::vector<std::uint8_t> out;
  out.reserve(kEventHeaderBytes + stream.events.size() * kEventRecordBytes);
  for (char c : {'S', 'P', 'K', '1'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u16(out, kEventFileVersion);
  put_u16(out, stream.channel_count);
  put_u32(out, static_cast<std::uint32_t>(stream.events.size()));
  put_u32(out, stream.duration_us);
  for (const Event& e : stream.events) {
    put_u32(out, e.time_us);
    put_u16(out, e.channel);
  }
  return out;
}

EventStream load_events(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_events(bytes);
}

void write_events(const EventStream& stream, const std::filesystem::path& path) {
  const auto bytes = encode_events(stream);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

SpikeTensor bin_events(const EventStream& stream, double dt_ms, std::size_t timesteps,
                       bool binary) {
  SpikeTensor out;
  out.dt_ms = dt_ms;
  out.values = Matrix(stream.channel_count, timesteps);
  const double bin_us = 1000.0 * dt_ms;
  for (const Event& e : stream.events) {
    const double bin = std::floor(static_cast<double>(e.time_us) / bin_us);
    if (bin >= static_cast<double>(timesteps)) continue;
    double& cell = out.values(e.channel, static_cast<std::size_t>(bin));
    cell = binary ? 1.0 : cell + 1.0;
  }
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::DatasetMissing, "cannot open manifest " + path.string());

  DatasetManifest manifest;
  const auto base = path.parent_path();
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      int classes = -1;
      int channels = -1;
      if (std::sscanf(line.c_str(), "#classes=%d channels=%d", &classes, &channels) == 2) {
        manifest.num_classes = classes;
        manifest.channel_count = channels;
        have_header = true;
      }
      continue;
    }
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos)
      throw Error(ErrorCode::ManifestInvalid, "line " + std::to_string(lineno) + ": no tab");
    ManifestEntry entry;
    entry.path = base / line.substr(0, tab);
    try {
      std::size_t used = 0;
      entry.label = std::stoi(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::ManifestInvalid, "line " + std::to_string(lineno) + ": bad label");
    }
    manifest.entries.push_back(std::move(entry));
  }
  if (!have_header)
    throw Error(ErrorCode::ManifestInvalid, "missing '#classes=K channels=C' header");
  if (manifest.num_classes <= 0 || manifest.channel_count <= 0)
    throw Error(ErrorCode::ManifestInvalid, "non-positive classes/channels in header");
  for (const auto& e : manifest.entries) {
    if (e.label < 0 || e.label >= manifest.num_classes)
      throw Error(ErrorCode::ManifestInvalid, "label out of range for " + e.path.string());
    if (!std::filesystem::exists(e.path))
      throw Error(ErrorCode::MissingFile, e.path.string());
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "#classes=" << manifest.num_classes << " channels=" << manifest.channel_count << '\n';
  const auto base = path.parent_path();
  for (const auto& e : manifest.entries) {
    const auto rel = e.path.is_absolute() ? std::filesystem::relative(e.path, base) : e.path;
    out << rel.generic_string() << '\t' << e.label << '\n';
  }
}

std::pair<DatasetManifest, DatasetManifest> split_manifest(const DatasetManifest& manifest,
                                                           double fraction, std::uint64_t seed) {
  DatasetManifest train = manifest;
  DatasetManifest val = manifest;
  train.entries.clear();
  val.entries.clear();
  const auto order = shuffled_order(manifest.entries.size(), seed ^ 0x5eed5a1dULL, 0);
  const auto n_val = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(manifest.entries.size())));
  std::vector<bool> is_val(manifest.entries.size(), false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    (is_val[i] ? val : train).entries.push_back(manifest.entries[i]);
  return {std::move(train), std::move(val)};
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i)]);
  return order;
}

BatchIterator::BatchIterator(DatasetManifest manifest, std::size_t batch_size, bool shuffle,
                             std::uint64_t seed, BinningConfig binning)
    : manifest_(std::move(manifest)),
      batch_size_(batch_size),
      shuffle_(shuffle),
      seed_(seed),
      binning_(binning),
      cache_(manifest_.entries.size()),
      cached_(manifest_.entries.size(), false) {
  if (batch_size_ == 0) throw Error(ErrorCode::ConfigInvalid, "batch_size must be >= 1");
  start_epoch(0);
}

std::vector<std::size_t> BatchIterator::epoch_order(std::uint64_t epoch) const {
  if (shuffle_) return shuffled_order(manifest_.entries.size(), seed_, epoch);
  std::vector<std::size_t> order(manifest_.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return order;
}

void BatchIterator::start_epoch(std::uint64_t epoch) {
  epoch_ = epoch;
  order_ = epoch_order(epoch);
  cursor_ = 0;
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (manifest_.entries.size() + batch_size_ - 1) / batch_size_;
}

const EventStream& BatchIterator::events(std::size_t index) {
  if (!cached_[index]) {
    const auto& path = manifest_.entries[index].path;
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
    cache_[index] = load_events(path);
    cached_[index] = true;
  }
  return cache_[index];
}

void BatchIterator::skip(std::size_t batches) {
  cursor_ = std::min(order_.size(), cursor_ + batches * batch_size_);
}

bool BatchIterator::next(Batch& out) {
  out.inputs.clear();
  out.labels.clear();
  out.indices.clear();
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  for (; cursor_ < end; ++cursor_) {
    const std::size_t idx = order_[cursor_];
    const EventStream& stream = events(idx);
    if (stream.channel_count != static_cast<std::size_t>(manifest_.channel_count))
      throw Error(ErrorCode::ShapeMismatch, manifest_.entries[idx].path.string() +
                                                ": channel count differs from manifest");
    out.inputs.push_back(
        bin_events(stream, binning_.dt_ms, binning_.timesteps, binning_.binary));
    out.labels.push_back(manifest_.entries[idx].label);
    out.indices.push_back(idx);
  }
  return true;
}

}  // namespace axdelay
