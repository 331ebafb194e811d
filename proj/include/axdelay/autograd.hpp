#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "axdelay/layers.hpp"
#include "axdelay/matrix.hpp"
#include "axdelay/spike_data.hpp"

namespace axdelay {

struct SurrogateConfig {
  double width = 5.0;  // potential units
  SpikeMode mode = SpikeMode::spiking;
  // Backpropagate through the refractory self-feedback. Off for spiking
  // training; relaxed mode turns it on so gradients are exact.
  bool refractory_grad = false;
};

/// rho(u) = exp(-|u - theta_u| / width) / (2 width).
double surrogate_derivative(double u, double theta_u, double width);

enum class LossKind { count_mse, count_softmax_ce };

struct LossConfig {
  LossKind kind = LossKind::count_mse;
  double target_true = 30.0;
  double target_false = 5.0;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // dL/dcounts
};

LossResult loss_and_grad(std::span<const double> counts, int label, const LossConfig& cfg);

struct LayerGradients {
  Matrix dW;
  std::vector<double> db;
  std::vector<double> dd;  // empty for layers without delay
};

struct Gradients {
  std::vector<LayerGradients> layers;

  static Gradients zeros_like(const Network& net);
  void add(const Gradients& other, double scale = 1.0);
};

/// Reverse sweep over layers and time. Requires a trace recorded with
/// retain_trace; the trace's spike/delay modes select the local derivatives.
Gradients backward(const ForwardTrace& trace, const Network& net,
                   std::span<const double> dloss_dcounts, const SurrogateConfig& cfg);

struct AdamConfig {
  double weight_lr = 0.1;
  double delay_lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct MomentPair {
  std::vector<double> m;
  std::vector<double> v;
};

struct OptimizerState {
  struct Layer {
    MomentPair W, b, d;
  };
  std::vector<Layer> layers;
  std::uint64_t step = 0;

  static OptimizerState for_network(const Network& net);
};

/// Bias-corrected Adam on W, b (weight_lr) and d (delay_lr); delays are then
/// clipped into [0, theta_d] of their layer.
void adam_step(Network& net, const Gradients& grads, OptimizerState& state, const AdamConfig& cfg);

struct TrainConfig {
  LossConfig loss;
  SurrogateConfig surrogate;
  AdamConfig adam;
  DelayMode delay_mode = DelayMode::round;
};

ForwardOptions forward_options_for(const TrainConfig& cfg, bool retain);

struct BatchResult {
  Gradients grads;  // mean over the batch
  double loss = 0.0;  // mean over the batch
  std::size_t correct = 0;
  std::size_t samples = 0;
};

/// Per-sample forward/backward, parallel over samples; per-sample gradients are
/// summed in sample order so the result does not depend on the thread count.
BatchResult batch_gradients(const Network& net, const Batch& batch, const TrainConfig& cfg);

struct StepMetrics {
  std::size_t steps = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> step_losses;
};

/// Owns the optimizer state and a position in the data stream. The stream
/// position is a pure function of the global step count.
class Trainer {
 public:
  using StepHook = std::function<void(std::uint64_t global_step, const Network&)>;

  Trainer(Network& net, BatchIterator& data, TrainConfig cfg);

  StepMetrics train_steps(std::size_t n_steps, const StepHook& hook = {});
  StepMetrics train_epochs(std::size_t epochs, const StepHook& hook = {});

  std::uint64_t global_step() const { return global_step_; }
  std::uint64_t epoch() const;
  /// Repositions the data stream; used when resuming from a checkpoint.
  void set_global_step(std::uint64_t step);

  OptimizerState& optimizer() { return opt_; }
  const OptimizerState& optimizer() const { return opt_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& config() { return cfg_; }
  Network& network() { return net_; }

 private:
  void seek(std::uint64_t step);

  Network& net_;
  BatchIterator& data_;
  TrainConfig cfg_;
  OptimizerState opt_;
  std::uint64_t global_step_ = 0;
  bool positioned_ = false;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::size_t samples = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

EvalResult evaluate(const Network& net, BatchIterator& data, const TrainConfig& cfg);

}  // namespace axdelay
