#include "axdelay/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include "axdelay/error.hpp"

namespace axdelay {

namespace {

std::uint64_t uniform_int(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t span = hi - lo + 1;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return lo + x % span;
}

bool spaced(const std::vector<std::uint32_t>& times, std::uint32_t gap) {
  auto sorted = times;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] - sorted[i - 1] < gap) return false;
  return true;
}

SyntheticSample make_sample(const SyntheticTemplate& layout, const SyntheticTaskConfig& cfg,
                            int label, std::mt19937_64& rng) {
  SyntheticSample s;
  s.label = label;
  s.events.channel_count = static_cast<std::uint16_t>(cfg.channels);
  s.events.duration_us = layout.duration_ms * 1000;
  const auto offset_us = static_cast<std::int64_t>(uniform_int(rng, 0, cfg.offset_jitter_ms)) * 1000;
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    std::int64_t t_us = static_cast<std::int64_t>(layout.base_ms[c]) * 1000 + offset_us;
    if (label == 1) t_us += static_cast<std::int64_t>(layout.shift_ms[c]) * 1000;
    if (cfg.spike_jitter_us > 0)
      t_us += static_cast<std::int64_t>(uniform_int(rng, 0, 2 * cfg.spike_jitter_us)) -
              cfg.spike_jitter_us;
    t_us = std::clamp<std::int64_t>(t_us, 0, s.events.duration_us);
    s.events.events.push_back({static_cast<std::uint32_t>(t_us), static_cast<std::uint16_t>(c)});
  }
  std::sort(s.events.events.begin(), s.events.events.end(),
            [](const Event& a, const Event& b) { return a.time_us < b.time_us; });
  return s;
}

}  // namespace

SyntheticTemplate make_template(const SyntheticTaskConfig& cfg, std::uint64_t seed) {
  if (cfg.channels == 0 || cfg.min_shift_ms > cfg.max_shift_ms)
    throw Error(ErrorCode::ConfigInvalid, "bad synthetic task configuration");
  std::mt19937_64 rng(seed);
  SyntheticTemplate t;
  // Window wide enough that rejection sampling of a spaced layout succeeds
  // quickly: twice the packed length of one class.
  const std::uint32_t span = 2 * cfg.min_gap_ms * static_cast<std::uint32_t>(cfg.channels);
  for (int attempt = 0;; ++attempt) {
    if (attempt > 100000)
      throw Error(ErrorCode::ConfigInvalid, "could not place a spaced synthetic template");
    t.base_ms.resize(cfg.channels);
    t.shift_ms.resize(cfg.channels);
    std::vector<std::uint32_t> shifted(cfg.channels);
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      t.base_ms[c] = cfg.lead_in_ms + static_cast<std::uint32_t>(uniform_int(rng, 0, span));
      t.shift_ms[c] = static_cast<std::uint32_t>(uniform_int(rng, cfg.min_shift_ms, cfg.max_shift_ms));
      shifted[c] = t.base_ms[c] + t.shift_ms[c];
    }
    if (spaced(t.base_ms, cfg.min_gap_ms) && spaced(shifted, cfg.min_gap_ms)) break;
  }
  std::uint32_t last = 0;
  for (std::size_t c = 0; c < cfg.channels; ++c) last = std::max(last, t.base_ms[c] + t.shift_ms[c]);
  t.duration_ms = last + cfg.offset_jitter_ms + 1;
  return t;
}

SyntheticTask make_synthetic_task(const SyntheticTaskConfig& cfg, std::uint64_t seed) {
  SyntheticTask task;
  task.layout = make_template(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = 0; i < cfg.train_samples; ++i)
    task.train.push_back(make_sample(task.layout, cfg, static_cast<int>(i % 2), rng));
  for (std::size_t i = 0; i < cfg.test_samples; ++i)
    task.test.push_back(make_sample(task.layout, cfg, static_cast<int>(i % 2), rng));
  return task;
}

void write_synthetic_task(const SyntheticTask& task, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "events");
  auto emit = [&](const std::vector<SyntheticSample>& samples, const char* split) {
    DatasetManifest manifest;
    manifest.num_classes = 2;
    manifest.channel_count = samples.empty() ? 0 : samples.front().events.channel_count;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "events/%s_%05zu.spk", split, i);
      write_events(samples[i].events, dir / name);
      manifest.entries.push_back({name, samples[i].label});
    }
    write_manifest(manifest, dir / (std::string(split) + ".tsv"));
  };
  emit(task.train, "train");
  emit(task.test, "test");
}

}  // namespace axdelay
