#include "axdelay/layers.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "axdelay/error.hpp"

namespace axdelay {

void NetworkConfig::validate() const {
  if (layer_sizes.size() < 2)
    throw Error(ErrorCode::ConfigInvalid, "need at least input and output sizes");
  for (auto n : layer_sizes)
    if (n == 0) throw Error(ErrorCode::ConfigInvalid, "layer sizes must be positive");
  if (delay_on_layer.size() != num_layers())
    throw Error(ErrorCode::ConfigInvalid,
                "delay_on_layer needs one flag per weight layer (" +
                    std::to_string(num_layers()) + ")");
  if (initial_delay_cap < 0) throw Error(ErrorCode::ConfigInvalid, "initial_delay_cap < 0");
  kernel.validate();
}

Network make_network(const NetworkConfig& config, std::uint64_t seed, const InitConfig& init) {
  config.validate();
  Network net;
  net.config = config;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < config.num_layers(); ++l) {
    const std::size_t n_in = config.layer_sizes[l];
    const std::size_t n_out = config.layer_sizes[l + 1];
    const double w0 = init.weight_scale * config.kernel.theta_u /
                      (config.kernel.tau_s * std::sqrt(static_cast<double>(n_in)));
    LayerParams p;
    p.W = Matrix(n_out, n_in);
    // 53-bit uniform from the raw engine output keeps init portable.
    auto uniform01 = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    for (double& w : p.W.flat()) w = w0 * (2.0 * uniform01() - 1.0);
    p.b.assign(n_out, 0.0);
    p.has_delay = config.delay_on_layer[l];
    if (p.has_delay) {
      p.d.assign(n_out, 0.0);
      if (init.delay_init_max > 0.0) {
        const double hi = std::min(init.delay_init_max, config.initial_delay_cap);
        for (double& d : p.d) d = hi * uniform01();
      }
    }
    net.layers.push_back(std::move(p));
    net.theta_d.push_back(config.delay_on_layer[l] ? config.initial_delay_cap : 0.0);
  }
  return net;
}

namespace detail {

Matrix dense_drive(const Matrix& W, std::span<const double> b, const Matrix& a) {
  const std::size_t n_out = W.rows();
  const std::size_t n_in = W.cols();
  const std::size_t T = a.cols();
  Matrix z(n_out, T);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n_out; ++i) {
    auto zi = z.row(i);
    std::fill(zi.begin(), zi.end(), b[i]);
    for (std::size_t j = 0; j < n_in; ++j) {
      const double w = W(i, j);
      if (w == 0.0) continue;
      const auto aj = a.row(j);
      for (std::size_t t = 0; t < T; ++t) zi[t] += w * aj[t];
    }
  }
  return z;
}

void srm_scan(Matrix& u, Matrix& s, std::span<const double> nu, double theta_u,
              const ForwardOptions& opts) {
  const std::size_t n = u.rows();
  const std::size_t T = u.cols();
  const std::size_t K = nu.size();
  s = Matrix(n, T);
  const bool relaxed = opts.spike_mode == SpikeMode::relaxed;
  const double inv_width = 1.0 / opts.relax_width;
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    auto ui = u.row(i);
    auto si = s.row(i);
    for (std::size_t t = 0; t < T; ++t) {
      // ui[t] already holds drive plus refractory feedback from earlier steps;
      // nu[0] = 0 so a spike never feeds back into its own step.
      const double out =
          relaxed ? 1.0 / (1.0 + std::exp(-(ui[t] - theta_u) * inv_width))
                  : (ui[t] >= theta_u ? 1.0 : 0.0);
      si[t] = out;
      if (out == 0.0) continue;
      const std::size_t span = std::min(K, T - t);
      for (std::size_t k = 1; k < span; ++k) ui[t + k] += nu[k] * out;
    }
  }
}

}  // namespace detail

SrmOutput srm_forward(const LayerParams& params, const Matrix& input_spikes,
                      const KernelConfig& cfg, const ForwardOptions& opts) {
  if (input_spikes.rows() != params.inputs())
    throw Error(ErrorCode::ShapeMismatch, "layer expects " + std::to_string(params.inputs()) +
                                              " input channels, got " +
                                              std::to_string(input_spikes.rows()));
  const auto eps = response_kernel(cfg);
  const auto nu = refractory_kernel(cfg);
  SrmOutput out;
  out.a = causal_conv(input_spikes, eps);
  out.u = detail::dense_drive(params.W, params.b, out.a);
  detail::srm_scan(out.u, out.s, nu, cfg.theta_u, opts);
  return out;
}

Matrix axonal_delay_forward(const Matrix& s, std::span<const double> d, double dt_ms) {
  const std::size_t T = s.cols();
  Matrix out(s.rows(), T);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const double steps = std::nearbyint(d[i] / dt_ms);
    if (steps >= static_cast<double>(T)) continue;
    const auto shift = static_cast<std::size_t>(std::max(0.0, steps));
    const auto src = s.row(i);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end() - static_cast<std::ptrdiff_t>(shift),
              dst.begin() + static_cast<std::ptrdiff_t>(shift));
  }
  return out;
}

Matrix axonal_delay_interpolated(const Matrix& s, std::span<const double> d, double dt_ms) {
  const std::size_t T = s.cols();
  Matrix out(s.rows(), T);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const double x = std::max(0.0, d[i] / dt_ms);
    const double whole = std::floor(x);
    const double frac = x - whole;
    if (whole >= static_cast<double>(T)) continue;
    const auto k = static_cast<std::size_t>(whole);
    const auto src = s.row(i);
    auto dst = out.row(i);
    for (std::size_t t = k; t < T; ++t) {
      double v = (1.0 - frac) * src[t - k];
      if (t >= k + 1) v += frac * src[t - k - 1];
      dst[t] = v;
    }
  }
  return out;
}

std::vector<double> clip_delays(std::span<const double> d, double theta_d) {
  std::vector<double> out(d.begin(), d.end());
  clip_delays_inplace(out, theta_d);
  return out;
}

void clip_delays_inplace(std::span<double> d, double theta_d) {
  for (double& v : d) v = std::max(0.0, std::min(v, theta_d));
}

ForwardResult network_forward(const Network& net, const Matrix& input, const ForwardOptions& opts) {
  const auto& cfg = net.config;
  if (input.rows() != cfg.layer_sizes.front())
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(input.rows()) +
                                              " channels, network expects " +
                                              std::to_string(cfg.layer_sizes.front()));
  const auto eps = response_kernel(cfg.kernel);
  const auto nu = refractory_kernel(cfg.kernel);

  ForwardResult result;
  result.trace.options = opts;
  Matrix current = input;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LayerParams& p = net.layers[l];
    LayerTrace lt;
    lt.a = causal_conv(current, eps);
    lt.u = detail::dense_drive(p.W, p.b, lt.a);
    detail::srm_scan(lt.u, lt.s, nu, cfg.kernel.theta_u, opts);
    if (p.has_delay) {
      lt.s_d = opts.delay_mode == DelayMode::round
                   ? axonal_delay_forward(lt.s, p.d, cfg.kernel.dt_ms)
                   : axonal_delay_interpolated(lt.s, p.d, cfg.kernel.dt_ms);
    }
    current = lt.output();
    if (opts.retain_trace) result.trace.layers.push_back(std::move(lt));
  }

  result.counts.assign(current.rows(), 0.0);
  for (std::size_t c = 0; c < current.rows(); ++c)
    for (double v : current.row(c)) result.counts[c] += v;
  return result;
}

std::size_t count_params(const NetworkConfig& config) {
  std::size_t total = 0;
  for (std::size_t l = 0; l < config.num_layers(); ++l) {
    const std::size_t n_in = config.layer_sizes[l];
    const std::size_t n_out = config.layer_sizes[l + 1];
    total += n_out * n_in + n_out;
    if (l < config.delay_on_layer.size() && config.delay_on_layer[l]) total += n_out;
  }
  return total;
}

int predict(std::span<const double> counts) {
  int best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c)
    if (counts[c] > counts[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  return best;
}

}  // namespace axdelay
