#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "axdelay/matrix.hpp"

namespace axdelay {

/// Spike-response model time constants, all in milliseconds except theta_u
/// (potential units).
struct KernelConfig {
  double tau_s = 1.0;
  double tau_r = 1.0;
  double theta_u = 10.0;
  double dt_ms = 1.0;
  std::size_t truncation = 8;

  void validate() const;
};

/// Length at which both kernels have decayed below 1e-3 of their peak,
/// capped at 8*max(tau_s, tau_r)/dt steps and never shorter than 2 steps.
std::size_t default_truncation(double tau_s, double tau_r, double dt_ms);

/// Fills in the default truncation for the given constants.
KernelConfig make_kernel_config(double tau_s, double tau_r, double theta_u, double dt_ms);

/// eps[k] = (k dt / tau_s) exp(1 - k dt / tau_s), sampled at k = 0..truncation-1.
std::vector<double> response_kernel(const KernelConfig& cfg);

/// nu[k] = -2 theta_u (k dt / tau_r) exp(1 - k dt / tau_r).
std::vector<double> refractory_kernel(const KernelConfig& cfg);

/// out[c][t] = sum_{k <= min(t, K-1)} kernel[k] * signal[c][t-k].
/// OpenMP-parallel over channels; zero input samples are skipped, so cost
/// scales with spike count rather than T*K.
Matrix causal_conv(const Matrix& signal, std::span<const double> kernel);

/// Adjoint of causal_conv: out[c][t] = sum_{k} kernel[k] * grad[c][t+k].
Matrix causal_correlate(const Matrix& grad, std::span<const double> kernel);

}  // namespace axdelay
