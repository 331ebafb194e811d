#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "axdelay/autograd.hpp"
#include "axdelay/checkpoint.hpp"
#include "axdelay/config.hpp"
#include "axdelay/scheduler.hpp"
#include "axdelay/synthetic.hpp"

namespace axdelay {

enum class RunStage { pretrain, schedule, finetune, done };

std::string_view to_string(RunStage stage);

/// Complete resumable state of a training run.
struct RunState {
  RunConfig config;
  std::string config_source;  // config file text as read at launch
  Network net;
  OptimizerState opt;
  ScheduleState schedule;
  RunStage stage = RunStage::pretrain;
  std::uint64_t global_step = 0;
  std::uint64_t stage_units = 0;  // epochs or schedule rounds finished in this stage
  std::uint64_t units_total = 0;  // across stages; names kept checkpoints
  std::mt19937_64 rng;
};

RunState fresh_run_state(const RunConfig& config, const std::string& config_source);

Checkpoint to_checkpoint(const RunState& state);
RunState from_checkpoint(const Checkpoint& ckpt);

/// Network-only view of a checkpoint (for eval/inspect).
Network network_from_checkpoint(const Checkpoint& ckpt, RunConfig* config_out = nullptr);

/// Append-only metrics CSV:
/// epoch,step,split,loss,accuracy,theta_d_layer1,theta_d_layer2
/// Schedule decisions use split "schedule-layer<k>" with the window fraction
/// in the loss column and 1 (grow) / 0 (stop) in the accuracy column.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);

  void row(std::uint64_t epoch, std::uint64_t step, const std::string& split, double loss,
           double accuracy, const std::vector<double>& caps);

  static constexpr const char* kHeader =
      "epoch,step,split,loss,accuracy,theta_d_layer1,theta_d_layer2";

 private:
  std::ofstream out_;
};

/// Exclusive ownership of an output directory via an O_EXCL lock file.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

/// Drives a Trainer from the scheduler. Caps are written to the network and
/// delays re-clipped whenever the scheduler changes them.
class TrainerScheduleTarget : public ScheduleTarget {
 public:
  using TrainLogger = std::function<void(const StepMetrics&)>;
  using DecisionLogger = std::function<void(const ScheduleLogEntry&)>;

  TrainerScheduleTarget(Trainer& trainer, TrainLogger on_train = {},
                        DecisionLogger on_decision = {});

  std::vector<std::size_t> delay_layers() const override;
  std::vector<double> delays(std::size_t layer) const override;
  void set_cap(std::size_t layer, double theta_d) override;
  void pretrain(std::size_t epochs) override;
  void train(std::size_t steps) override;
  void on_decision(const ScheduleLogEntry& entry) override;

 private:
  Trainer& trainer_;
  TrainLogger on_train_;
  DecisionLogger on_decision_;
};

struct TrainSummary {
  std::vector<double> caps;  // per delay layer
  std::optional<double> test_accuracy;
  std::optional<double> val_accuracy;
  std::uint64_t steps = 0;
  std::filesystem::path output_dir;
};

/// Pre-training, adaptive schedule, fine-tuning; checkpoints after every
/// epoch/round and metrics rows as it goes. `stop_after_units` halts early
/// (after that many epochs/rounds in total) leaving a resumable checkpoint.
TrainSummary run_train(const RunConfig& config, const std::string& config_source,
                       const std::optional<std::filesystem::path>& resume = std::nullopt,
                       std::ostream* progress = nullptr,
                       std::optional<std::uint64_t> stop_after_units = std::nullopt);

struct EvalReport {
  double accuracy = 0.0;
  std::size_t samples = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// Argmax of output spike counts; ties resolve to the lowest class index.
EvalReport run_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest);

struct LayerDelayReport {
  std::size_t layer = 0;
  double theta_d = 0.0;
  DelayHistogram histogram;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

std::vector<LayerDelayReport> inspect_delays(const Network& net);
std::vector<LayerDelayReport> inspect_delays(const std::filesystem::path& checkpoint);
std::string format_delay_report(const std::vector<LayerDelayReport>& report);

/// "synthetic" profile pointed at a task written to `dir`; the horizon is
/// the template duration plus 20 ms of tail.
RunConfig synthetic_run_config(const SyntheticTemplate& layout, const std::filesystem::path& dir,
                               std::uint64_t seed);

/// Glibc's default mmap threshold makes every per-sample matrix a fresh
/// mmap/munmap; raising it keeps those buffers on the heap.
void tune_allocator();

}  // namespace axdelay
