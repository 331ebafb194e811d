#include "axdelay/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "axdelay/error.hpp"

namespace axdelay {

void KernelConfig::validate() const {
  if (!(tau_s > 0) || !(tau_r > 0) || !(theta_u > 0) || !(dt_ms > 0))
    throw Error(ErrorCode::ConfigInvalid, "tau_s, tau_r, theta_u and dt_ms must be positive");
  if (truncation < 1) throw Error(ErrorCode::ConfigInvalid, "kernel truncation must be >= 1");
}

std::size_t default_truncation(double tau_s, double tau_r, double dt_ms) {
  const double tau_max = std::max(tau_s, tau_r);
  const auto cap = static_cast<std::size_t>(std::ceil(8.0 * tau_max / dt_ms));
  // x exp(1 - x) falls below 1e-3 for good once x passes ~11.2; find the
  // first grid point beyond the peak where that holds for the slower kernel.
  std::size_t k = 1;
  while (true) {
    const double x = static_cast<double>(k) * dt_ms / tau_max;
    if (x > 1.0 && x * std::exp(1.0 - x) < 1e-3) break;
    ++k;
  }
  return std::max<std::size_t>(2, std::min(k, cap));
}

KernelConfig make_kernel_config(double tau_s, double tau_r, double theta_u, double dt_ms) {
  KernelConfig cfg{tau_s, tau_r, theta_u, dt_ms, 1};
  cfg.truncation = default_truncation(tau_s, tau_r, dt_ms);
  return cfg;
}

std::vector<double> response_kernel(const KernelConfig& cfg) {
  std::vector<double> eps(cfg.truncation);
  for (std::size_t k = 0; k < eps.size(); ++k) {
    const double x = static_cast<double>(k) * cfg.dt_ms / cfg.tau_s;
    eps[k] = x * std::exp(1.0 - x);
  }
  return eps;
}

std::vector<double> refractory_kernel(const KernelConfig& cfg) {
  std::vector<double> nu(cfg.truncation);
  for (std::size_t k = 0; k < nu.size(); ++k) {
    const double x = static_cast<double>(k) * cfg.dt_ms / cfg.tau_r;
    nu[k] = -2.0 * cfg.theta_u * x * std::exp(1.0 - x);
  }
  return nu;
}

Matrix causal_conv(const Matrix& signal, std::span<const double> kernel) {
  const std::size_t rows = signal.rows();
  const std::size_t T = signal.cols();
  const std::size_t K = kernel.size();
  Matrix out(rows, T);
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < rows; ++c) {
    const auto in = signal.row(c);
    auto dst = out.row(c);
    for (std::size_t t0 = 0; t0 < T; ++t0) {
      const double v = in[t0];
      if (v == 0.0) continue;
      const std::size_t span = std::min(K, T - t0);
      for (std::size_t k = 0; k < span; ++k) dst[t0 + k] += kernel[k] * v;
    }
  }
  return out;
}

Matrix causal_correlate(const Matrix& grad, std::span<const double> kernel) {
  const std::size_t rows = grad.rows();
  const std::size_t T = grad.cols();
  const std::size_t K = kernel.size();
  Matrix out(rows, T);
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < rows; ++c) {
    const auto g = grad.row(c);
    auto dst = out.row(c);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t span = std::min(K, T - t);
      double acc = 0.0;
      for (std::size_t k = 0; k < span; ++k) acc += kernel[k] * g[t + k];
      dst[t] = acc;
    }
  }
  return out;
}

}  // namespace axdelay
