#include "axdelay/reference.hpp"

#include <cmath>

#include "axdelay/error.hpp"
#include "axdelay/kernels.hpp"

namespace axdelay::reference {

Matrix causal_conv(const Matrix& signal, std::span<const double> kernel) {
  Matrix out(signal.rows(), signal.cols());
  for (std::size_t c = 0; c < signal.rows(); ++c)
    for (std::size_t t = 0; t < signal.cols(); ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size() && k <= t; ++k) acc += kernel[k] * signal(c, t - k);
      out(c, t) = acc;
    }
  return out;
}

Matrix causal_correlate(const Matrix& grad, std::span<const double> kernel) {
  Matrix out(grad.rows(), grad.cols());
  const std::size_t T = grad.cols();
  for (std::size_t c = 0; c < grad.rows(); ++c)
    for (std::size_t t = 0; t < T; ++t) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kernel.size() && t + k < T; ++k) acc += kernel[k] * grad(c, t + k);
      out(c, t) = acc;
    }
  return out;
}

Matrix dense_drive(const Matrix& W, std::span<const double> b, const Matrix& a) {
  Matrix z(W.rows(), a.cols());
  for (std::size_t i = 0; i < W.rows(); ++i)
    for (std::size_t t = 0; t < a.cols(); ++t) {
      double acc = b[i];
      for (std::size_t j = 0; j < W.cols(); ++j) acc += W(i, j) * a(j, t);
      z(i, t) = acc;
    }
  return z;
}

void srm_scan(const Matrix& z, Matrix& u, Matrix& s, std::span<const double> nu, double theta_u,
              const ForwardOptions& opts) {
  const std::size_t T = z.cols();
  u = Matrix(z.rows(), T);
  s = Matrix(z.rows(), T);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t t = 0; t < T; ++t) {
      double v = z(i, t);
      for (std::size_t k = 1; k < nu.size() && k <= t; ++k) v += nu[k] * s(i, t - k);
      u(i, t) = v;
      if (opts.spike_mode == SpikeMode::relaxed)
        s(i, t) = 1.0 / (1.0 + std::exp(-(v - theta_u) / opts.relax_width));
      else
        s(i, t) = v >= theta_u ? 1.0 : 0.0;
    }
}

ForwardResult network_forward(const Network& net, const Matrix& input, const ForwardOptions& opts) {
  if (net.layers.empty() || input.rows() != net.layers.front().inputs())
    throw Error(ErrorCode::ShapeMismatch, "input does not match the first layer");
  const KernelConfig& kc = net.config.kernel;
  const auto eps = response_kernel(kc);
  const auto nu = refractory_kernel(kc);
  ForwardResult res;
  res.trace.options = opts;
  Matrix x = input;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerParams& p = net.layers[l];
    LayerTrace lt;
    lt.a = reference::causal_conv(x, eps);
    const Matrix z = reference::dense_drive(p.W, p.b, lt.a);
    reference::srm_scan(z, lt.u, lt.s, nu, kc.theta_u, opts);
    if (p.has_delay)
      lt.s_d = opts.delay_mode == DelayMode::interpolate
                   ? axonal_delay_interpolated(lt.s, p.d, kc.dt_ms)
                   : axonal_delay_forward(lt.s, p.d, kc.dt_ms);
    x = lt.output();
    res.trace.layers.push_back(std::move(lt));
  }
  res.counts.assign(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t t = 0; t < x.cols(); ++t) res.counts[i] += x(i, t);
  if (!opts.retain_trace) res.trace = {};
  return res;
}

BatchResult batch_gradients(const Network& net, const Batch& batch, const TrainConfig& cfg) {
  BatchResult result;
  result.grads = Gradients::zeros_like(net);
  result.samples = batch.size();
  if (batch.size() == 0) return result;
  const ForwardOptions opts = forward_options_for(cfg, true);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto fwd = reference::network_forward(net, batch.inputs[s].values, opts);
    const auto lr = loss_and_grad(fwd.counts, batch.labels[s], cfg.loss);
    result.loss += lr.loss * scale;
    if (predict(fwd.counts) == batch.labels[s]) ++result.correct;
    result.grads.add(backward(fwd.trace, net, lr.grad, cfg.surrogate), scale);
  }
  return result;
}

}  // namespace axdelay::reference
