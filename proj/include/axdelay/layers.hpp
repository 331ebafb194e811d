#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "axdelay/kernels.hpp"
#include "axdelay/matrix.hpp"

namespace axdelay {

/// How the threshold nonlinearity is evaluated in the forward pass.
/// `relaxed` replaces the Heaviside step with sigmoid((u - theta_u) / width);
/// it exists for gradient verification.
enum class SpikeMode { spiking, relaxed };

/// `round` shifts each spike train by round(d / dt) bins. `interpolate` splits
/// it linearly between the two neighbouring integer shifts, which makes the
/// output differentiable in d.
enum class DelayMode { round, interpolate };

struct LayerParams {
  Matrix W;               // [N_out x N_in]
  std::vector<double> b;  // [N_out]
  std::vector<double> d;  // [N_out] axonal delays in ms, empty when !has_delay
  bool has_delay = false;

  std::size_t inputs() const { return W.cols(); }
  std::size_t outputs() const { return W.rows(); }
};

struct NetworkConfig {
  std::vector<std::size_t> layer_sizes;  // N_0 (input channels) .. N_L (classes)
  std::vector<bool> delay_on_layer;      // one flag per weight layer
  KernelConfig kernel;
  double initial_delay_cap = 64.0;

  std::size_t num_layers() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  void validate() const;
};

/// Weights, biases and delays plus the per-layer delay cap theta_d (0 for
/// layers without delays).
struct Network {
  NetworkConfig config;
  std::vector<LayerParams> layers;
  std::vector<double> theta_d;
};

struct InitConfig {
  double weight_scale = 4.0;
  // Delays are drawn uniformly from [0, delay_init_max]; 0 starts every delay at zero.
  double delay_init_max = 0.0;
};

/// Biases start at zero, weights uniform in [-w0, w0] with
/// w0 = weight_scale * theta_u / (tau_s * sqrt(N_in)).
Network make_network(const NetworkConfig& config, std::uint64_t seed, const InitConfig& init = {});

struct ForwardOptions {
  SpikeMode spike_mode = SpikeMode::spiking;
  double relax_width = 5.0;
  DelayMode delay_mode = DelayMode::round;
  bool retain_trace = false;
};

/// Per-layer quantities kept for backpropagation.
struct LayerTrace {
  Matrix a;    // response of the layer input, eps * input   [N_in x T]
  Matrix u;    // membrane potential                          [N_out x T]
  Matrix s;    // generated spikes (or relaxed activations)   [N_out x T]
  Matrix s_d;  // delayed spikes; empty when the layer has no delay

  const Matrix& output() const { return s_d.empty() ? s : s_d; }
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  ForwardOptions options;

  bool empty() const { return layers.empty(); }
};

struct ForwardResult {
  std::vector<double> counts;  // per-class output spike totals
  ForwardTrace trace;          // empty unless retain_trace
};

struct SrmOutput {
  Matrix a;
  Matrix u;
  Matrix s;
};

/// One SRM dense layer: a = eps * input, u(t) = W a(t) + b + (nu * s)(t) with
/// the refractory sum over the neuron's own past spikes, s(t) = [u(t) >= theta_u].
SrmOutput srm_forward(const LayerParams& params, const Matrix& input_spikes,
                      const KernelConfig& cfg, const ForwardOptions& opts = {});

/// Shifts row i right by round(d_i / dt) bins (ties to even); spikes pushed
/// past the last bin are dropped.
Matrix axonal_delay_forward(const Matrix& s, std::span<const double> d, double dt_ms);

/// Linear split between floor(d_i/dt) and floor(d_i/dt)+1 bin shifts.
Matrix axonal_delay_interpolated(const Matrix& s, std::span<const double> d, double dt_ms);

/// d = max(0, min(d, theta_d)), elementwise.
std::vector<double> clip_delays(std::span<const double> d, double theta_d);
void clip_delays_inplace(std::span<double> d, double theta_d);

ForwardResult network_forward(const Network& net, const Matrix& input,
                              const ForwardOptions& opts = {});

/// Weights + biases of every layer plus one delay per neuron on delay layers.
std::size_t count_params(const NetworkConfig& config);

/// Index of the largest count; ties go to the lowest class index.
int predict(std::span<const double> counts);

namespace detail {
// Dense drive z(i,t) = sum_j W(i,j) a(j,t) + b_i; parallel over output rows.
Matrix dense_drive(const Matrix& W, std::span<const double> b, const Matrix& a);
// Runs the threshold/refractory recursion over z in place, producing u and s.
void srm_scan(Matrix& u, Matrix& s, std::span<const double> nu, double theta_u,
              const ForwardOptions& opts);
}  // namespace detail

}  // namespace axdelay
