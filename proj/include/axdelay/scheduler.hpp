#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace axdelay {

/// Neuron counts per integer delay value (round half to even).
struct DelayHistogram {
  std::vector<std::size_t> counts;
  std::size_t total = 0;

  /// Largest bin holding at least one neuron (0 for an empty layer).
  std::size_t max_occupied() const;
};

DelayHistogram delay_histogram(std::span<const double> d);

/// Fraction of the layer inside the window of bins ending at `anchor`.
/// By default the window is the m bins (anchor-m, anchor]; with
/// `include_extra_bin` it is the m+1 bins [anchor-m, anchor].
double window_fraction(const DelayHistogram& hist, std::size_t anchor, std::size_t m,
                       bool include_extra_bin = false);

struct SchedulerConfig {
  std::size_t m = 2;                 // sliding window size
  double alpha_theta = 0.05;         // cap fraction
  std::size_t tsteps = 150;          // training steps between decisions
  std::size_t pretrain_epochs = 40;
  double initial_cap = 64.0;
  bool window_includes_anchor_minus_m = false;
  double hard_ceiling = 10000.0;     // caps beyond this raise NonConvergence

  void validate() const;
};

enum class SchedulePhase { pretraining, growing, stopped };
enum class Decision { grow, stop };

std::string_view to_string(SchedulePhase phase);
std::string_view to_string(Decision decision);

struct LayerSchedule {
  double theta_d = 0.0;
  std::size_t anchor = 0;
  SchedulePhase phase = SchedulePhase::pretraining;
};

/// One decision for a growing layer. The anchor is re-read from the live
/// histogram (index of the largest occupied delay bin) before the window is
/// evaluated. Grow raises theta_d by one; Stop freezes the layer.
Decision scheduler_decide(LayerSchedule& state, const DelayHistogram& hist,
                          const SchedulerConfig& cfg);

struct ScheduleLogEntry {
  std::size_t layer = 0;       // index into the network's layers
  std::size_t round = 0;
  double alpha = 0.0;
  double theta_d = 0.0;        // cap after the decision
  Decision decision = Decision::stop;
};

/// What the scheduler drives. The harness adapts a Trainer to this; tests plug
/// in scripted fakes.
class ScheduleTarget {
 public:
  virtual ~ScheduleTarget() = default;

  /// Indices of layers carrying learnable delays.
  virtual std::vector<std::size_t> delay_layers() const = 0;
  virtual std::vector<double> delays(std::size_t layer) const = 0;
  virtual void set_cap(std::size_t layer, double theta_d) = 0;
  virtual void pretrain(std::size_t epochs) = 0;
  /// Runs `steps` optimizer updates with clipping at the current caps.
  virtual void train(std::size_t steps) = 0;
  virtual void on_decision(const ScheduleLogEntry&) {}
};

struct ScheduleResult {
  std::vector<std::size_t> layers;
  std::vector<double> caps;
  std::vector<std::vector<double>> delays;
  std::size_t rounds = 0;
  std::vector<ScheduleLogEntry> log;
};

/// Resumable scheduler state across the whole network.
struct ScheduleState {
  std::vector<std::size_t> layers;
  std::vector<LayerSchedule> per_layer;
  std::size_t rounds = 0;
  bool pretrained = false;

  bool finished() const;
};

ScheduleState initial_schedule_state(const ScheduleTarget& target, const SchedulerConfig& cfg);

/// Runs one decision round: every growing layer decides, then, if any layer
/// grew, all layers train `tsteps` steps together. Returns false once every
/// layer has stopped.
bool schedule_round(ScheduleState& state, ScheduleTarget& target, const SchedulerConfig& cfg,
                    std::vector<ScheduleLogEntry>* log = nullptr);

/// Pre-training followed by rounds until every layer stops.
ScheduleResult run_schedule(ScheduleTarget& target, const SchedulerConfig& cfg);

}  // namespace axdelay
