#pragma once

// Serial, straight-line versions of the hot kernels. They favour the most
// literal form of each sum over speed and are used to cross-check the
// OpenMP implementations in tests and benchmarks.

#include <span>
#include <vector>

#include "axdelay/autograd.hpp"
#include "axdelay/layers.hpp"
#include "axdelay/matrix.hpp"

namespace axdelay::reference {

Matrix causal_conv(const Matrix& signal, std::span<const double> kernel);
Matrix causal_correlate(const Matrix& grad, std::span<const double> kernel);
Matrix dense_drive(const Matrix& W, std::span<const double> b, const Matrix& a);

/// Gather form: u(t) = z(t) + sum_{k>=1} nu[k] s(t-k).
void srm_scan(const Matrix& z, Matrix& u, Matrix& s, std::span<const double> nu, double theta_u,
              const ForwardOptions& opts);

ForwardResult network_forward(const Network& net, const Matrix& input,
                              const ForwardOptions& opts = {});

/// One sample at a time, no threading.
BatchResult batch_gradients(const Network& net, const Batch& batch, const TrainConfig& cfg);

}  // namespace axdelay::reference
