#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "axdelay/spike_data.hpp"

namespace axdelay {

/// Two-class task whose classes differ only in per-channel spike lags. Class 0
/// fires channel c at base_c, class 1 at base_c + shift_c with
/// shift_c in [min_shift_ms, max_shift_ms]. Templates are drawn so that in
/// both classes any two spikes are at least min_gap_ms apart, which leaves a
/// network without delays nothing but identical isolated responses to count.
struct SyntheticTaskConfig {
  std::size_t channels = 10;
  std::size_t train_samples = 512;
  std::size_t test_samples = 256;
  std::uint32_t min_shift_ms = 5;
  std::uint32_t max_shift_ms = 40;
  std::uint32_t min_gap_ms = 20;
  std::uint32_t lead_in_ms = 5;
  std::uint32_t offset_jitter_ms = 10;  // per-sample global offset, uniform [0, jitter]
  std::uint32_t spike_jitter_us = 0;    // per-spike jitter, uniform [-j, +j]
};

struct SyntheticTemplate {
  std::vector<std::uint32_t> base_ms;   // class 0 spike time per channel
  std::vector<std::uint32_t> shift_ms;  // class 1 offset per channel
  std::uint32_t duration_ms = 0;        // horizon covering every sample
};

struct SyntheticSample {
  EventStream events;
  int label = 0;
};

struct SyntheticTask {
  SyntheticTemplate layout;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> test;
};

SyntheticTemplate make_template(const SyntheticTaskConfig& cfg, std::uint64_t seed);
SyntheticTask make_synthetic_task(const SyntheticTaskConfig& cfg, std::uint64_t seed);

/// Writes events/NNNNN.spk files plus train.tsv and test.tsv manifests.
void write_synthetic_task(const SyntheticTask& task, const std::filesystem::path& dir);

}  // namespace axdelay
