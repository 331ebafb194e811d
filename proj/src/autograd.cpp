#include "axdelay/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <omp.h>

#include "axdelay/error.hpp"

namespace axdelay {

double surrogate_derivative(double u, double theta_u, double width) {
  return std::exp(-std::abs(u - theta_u) / width) / (2.0 * width);
}

void LossConfig::validate() const {
  if (!(target_true > target_false) || target_false < 0)
    throw Error(ErrorCode::ConfigInvalid, "need target_true > target_false >= 0");
}

LossResult loss_and_grad(std::span<const double> counts, int label, const LossConfig& cfg) {
  const std::size_t classes = counts.size();
  if (label < 0 || static_cast<std::size_t>(label) >= classes)
    throw Error(ErrorCode::ShapeMismatch, "label " + std::to_string(label) + " out of range");
  LossResult r;
  r.grad.assign(classes, 0.0);
  if (cfg.kind == LossKind::count_mse) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double target =
          c == static_cast<std::size_t>(label) ? cfg.target_true : cfg.target_false;
      const double diff = counts[c] - target;
      r.loss += diff * diff;
      r.grad[c] = 2.0 * diff;
    }
    return r;
  }
  const double peak = *std::max_element(counts.begin(), counts.end());
  double z = 0.0;
  for (double c : counts) z += std::exp(c - peak);
  const double log_z = std::log(z) + peak;
  r.loss = log_z - counts[static_cast<std::size_t>(label)];
  for (std::size_t c = 0; c < classes; ++c) {
    r.grad[c] = std::exp(counts[c] - log_z);
    if (c == static_cast<std::size_t>(label)) r.grad[c] -= 1.0;
  }
  return r;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const auto& p : net.layers) {
    LayerGradients lg;
    lg.dW = Matrix(p.W.rows(), p.W.cols());
    lg.db.assign(p.b.size(), 0.0);
    if (p.has_delay) lg.dd.assign(p.d.size(), 0.0);
    g.layers.push_back(std::move(lg));
  }
  return g;
}

void Gradients::add(const Gradients& other, double scale) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto dst = layers[l].dW.flat();
    const auto src = other.layers[l].dW.flat();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
    for (std::size_t k = 0; k < layers[l].db.size(); ++k)
      layers[l].db[k] += scale * other.layers[l].db[k];
    for (std::size_t k = 0; k < layers[l].dd.size(); ++k)
      layers[l].dd[k] += scale * other.layers[l].dd[k];
  }
}

namespace {

// dL/ds from dL/ds_d: transpose of the shift.
Matrix delay_adjoint(const Matrix& g_out, std::span<const double> d, double dt_ms, DelayMode mode) {
  const std::size_t T = g_out.cols();
  Matrix g(g_out.rows(), T);
  for (std::size_t i = 0; i < g_out.rows(); ++i) {
    const auto src = g_out.row(i);
    auto dst = g.row(i);
    if (mode == DelayMode::round) {
      const double steps = std::nearbyint(d[i] / dt_ms);
      if (steps >= static_cast<double>(T)) continue;
      const auto k = static_cast<std::size_t>(std::max(0.0, steps));
      for (std::size_t t = 0; t + k < T; ++t) dst[t] = src[t + k];
    } else {
      const double x = std::max(0.0, d[i] / dt_ms);
      const double whole = std::floor(x);
      const double frac = x - whole;
      if (whole >= static_cast<double>(T)) continue;
      const auto k = static_cast<std::size_t>(whole);
      for (std::size_t t = 0; t + k < T; ++t) {
        double v = (1.0 - frac) * src[t + k];
        if (t + k + 1 < T) v += frac * src[t + k + 1];
        dst[t] = v;
      }
    }
  }
  return g;
}

// Central temporal difference, one-sided at the ends.
double temporal_slope(std::span<const double> x, std::size_t t, double dt_ms) {
  const std::size_t T = x.size();
  if (T < 2) return 0.0;
  if (t == 0) return (x[1] - x[0]) / dt_ms;
  if (t == T - 1) return (x[T - 1] - x[T - 2]) / dt_ms;
  return (x[t + 1] - x[t - 1]) / (2.0 * dt_ms);
}

// dL/dd for the round-shift forward: -sum_t h(t) * d/dt a_d(t), where a_d is
// the delayed response as consumed downstream and h its sensitivity.
std::vector<double> delay_grad_round(const Matrix& sensitivity, const Matrix& delayed_signal,
                                     double dt_ms) {
  std::vector<double> dd(sensitivity.rows(), 0.0);
  for (std::size_t i = 0; i < sensitivity.rows(); ++i) {
    const auto h = sensitivity.row(i);
    const auto a = delayed_signal.row(i);
    double acc = 0.0;
    for (std::size_t t = 0; t < h.size(); ++t) {
      if (h[t] == 0.0) continue;
      acc += h[t] * temporal_slope(a, t, dt_ms);
    }
    dd[i] = -acc;
  }
  return dd;
}

// Exact derivative of the interpolated shift:
// d s_d(t) / dd = (s(t-k-1) - s(t-k)) / dt.
std::vector<double> delay_grad_interpolated(const Matrix& g_out, const Matrix& s,
                                            std::span<const double> d, double dt_ms) {
  const std::size_t T = s.cols();
  std::vector<double> dd(s.rows(), 0.0);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (d[i] < 0.0) continue;
    const double whole = std::floor(d[i] / dt_ms);
    if (whole >= static_cast<double>(T)) continue;
    const auto k = static_cast<std::size_t>(whole);
    const auto g = g_out.row(i);
    const auto si = s.row(i);
    double acc = 0.0;
    for (std::size_t t = k; t < T; ++t) {
      const double prev = t >= k + 1 ? si[t - k - 1] : 0.0;
      acc += g[t] * (prev - si[t - k]);
    }
    dd[i] = acc / dt_ms;
  }
  return dd;
}

}  // namespace

Gradients backward(const ForwardTrace& trace, const Network& net,
                   std::span<const double> dloss_dcounts, const SurrogateConfig& cfg) {
  if (trace.empty() || trace.layers.size() != net.layers.size())
    throw Error(ErrorCode::TraceMissing, "forward pass ran without retain_trace");
  const auto& kcfg = net.config.kernel;
  const double dt = kcfg.dt_ms;
  const double theta = kcfg.theta_u;
  const auto eps = response_kernel(kcfg);
  const auto nu = refractory_kernel(kcfg);
  const std::size_t K = nu.size();
  const bool relaxed = trace.options.spike_mode == SpikeMode::relaxed;
  const double relax_w = trace.options.relax_width;
  const DelayMode delay_mode = trace.options.delay_mode;

  Gradients grads = Gradients::zeros_like(net);
  const std::size_t L = net.layers.size();
  const std::size_t T = trace.layers.back().u.cols();

  if (dloss_dcounts.size() != net.layers.back().outputs())
    throw Error(ErrorCode::ShapeMismatch, "dloss/dcounts size differs from output layer");

  // dL/d(output of the current layer); counts sum the last layer over time.
  Matrix g_out(net.layers.back().outputs(), T);
  for (std::size_t c = 0; c < g_out.rows(); ++c) {
    auto row = g_out.row(c);
    std::fill(row.begin(), row.end(), dloss_dcounts[c]);
  }

  Matrix h_next;          // dL/da of the layer above
  const Matrix* a_next = nullptr;

  for (std::size_t li = L; li-- > 0;) {
    const LayerParams& p = net.layers[li];
    const LayerTrace& lt = trace.layers[li];
    LayerGradients& lg = grads.layers[li];

    Matrix g_s;
    if (p.has_delay) {
      if (delay_mode == DelayMode::round) {
        lg.dd = a_next ? delay_grad_round(h_next, *a_next, dt) : delay_grad_round(g_out, lt.s_d, dt);
      } else {
        lg.dd = delay_grad_interpolated(g_out, lt.s, p.d, dt);
      }
      g_s = delay_adjoint(g_out, p.d, dt, delay_mode);
    } else {
      g_s = std::move(g_out);
    }

    const std::size_t n_out = p.outputs();
    Matrix delta(n_out, T);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n_out; ++i) {
      const auto u = lt.u.row(i);
      const auto gs = g_s.row(i);
      auto di = delta.row(i);
      for (std::size_t t = T; t-- > 0;) {
        double slope;
        if (relaxed) {
          const double sig = 1.0 / (1.0 + std::exp(-(u[t] - theta) / relax_w));
          slope = sig * (1.0 - sig) / relax_w;
        } else {
          slope = surrogate_derivative(u[t], theta, cfg.width);
        }
        double upstream = gs[t];
        if (cfg.refractory_grad) {
          const std::size_t span = std::min(K, T - t);
          for (std::size_t k = 1; k < span; ++k) upstream += nu[k] * di[t + k];
        }
        di[t] = slope * upstream;
      }
    }

    // dW = delta a^T, db = sum_t delta.
    const std::size_t n_in = p.inputs();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n_out; ++i) {
      const auto di = delta.row(i);
      double sum = 0.0;
      for (double v : di) sum += v;
      lg.db[i] = sum;
      for (std::size_t j = 0; j < n_in; ++j) {
        const auto aj = lt.a.row(j);
        double acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) acc += di[t] * aj[t];
        lg.dW(i, j) = acc;
      }
    }

    if (li == 0) break;

    // h = W^T delta is dL/da; correlating with eps gives dL/d(layer input).
    Matrix h(n_in, T);
#pragma omp parallel for schedule(static)
    for (std::size_t j = 0; j < n_in; ++j) {
      auto hj = h.row(j);
      for (std::size_t i = 0; i < n_out; ++i) {
        const double w = p.W(i, j);
        if (w == 0.0) continue;
        const auto di = delta.row(i);
        for (std::size_t t = 0; t < T; ++t) hj[t] += w * di[t];
      }
    }
    g_out = causal_correlate(h, eps);
    h_next = std::move(h);
    a_next = &lt.a;
  }
  return grads;
}

OptimizerState OptimizerState::for_network(const Network& net) {
  OptimizerState st;
  for (const auto& p : net.layers) {
    Layer l;
    l.W.m.assign(p.W.size(), 0.0);
    l.W.v.assign(p.W.size(), 0.0);
    l.b.m.assign(p.b.size(), 0.0);
    l.b.v.assign(p.b.size(), 0.0);
    l.d.m.assign(p.d.size(), 0.0);
    l.d.v.assign(p.d.size(), 0.0);
    st.layers.push_back(std::move(l));
  }
  return st;
}

namespace {

void adam_update(std::span<double> param, std::span<const double> grad, MomentPair& mom,
                 double lr, const AdamConfig& cfg, double bias1, double bias2) {
  for (std::size_t k = 0; k < param.size(); ++k) {
    mom.m[k] = cfg.beta1 * mom.m[k] + (1.0 - cfg.beta1) * grad[k];
    mom.v[k] = cfg.beta2 * mom.v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
    const double m_hat = mom.m[k] / bias1;
    const double v_hat = mom.v[k] / bias2;
    param[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace

void adam_step(Network& net, const Gradients& grads, OptimizerState& state, const AdamConfig& cfg) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    LayerParams& p = net.layers[l];
    const LayerGradients& g = grads.layers[l];
    auto& st = state.layers[l];
    adam_update(p.W.flat(), g.dW.flat(), st.W, cfg.weight_lr, cfg, bias1, bias2);
    adam_update(p.b, g.db, st.b, cfg.weight_lr, cfg, bias1, bias2);
    if (p.has_delay) {
      adam_update(p.d, g.dd, st.d, cfg.delay_lr, cfg, bias1, bias2);
      clip_delays_inplace(p.d, net.theta_d[l]);
    }
  }
}

ForwardOptions forward_options_for(const TrainConfig& cfg, bool retain) {
  ForwardOptions o;
  o.spike_mode = cfg.surrogate.mode;
  o.relax_width = cfg.surrogate.width;
  o.delay_mode = cfg.delay_mode;
  o.retain_trace = retain;
  return o;
}

BatchResult batch_gradients(const Network& net, const Batch& batch, const TrainConfig& cfg) {
  BatchResult result;
  result.grads = Gradients::zeros_like(net);
  result.samples = batch.size();
  if (batch.size() == 0) return result;

  const ForwardOptions opts = forward_options_for(cfg, true);
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, omp_get_max_threads())) * 2;

  std::vector<Gradients> per_sample(std::min(chunk, batch.size()));
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<int> hits(batch.size(), 0);

  for (std::size_t start = 0; start < batch.size(); start += chunk) {
    const std::size_t end = std::min(batch.size(), start + chunk);
    const auto count = static_cast<std::ptrdiff_t>(end - start);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t off = 0; off < count; ++off) {
      const std::size_t s = start + static_cast<std::size_t>(off);
      const auto fwd = network_forward(net, batch.inputs[s].values, opts);
      const auto lr = loss_and_grad(fwd.counts, batch.labels[s], cfg.loss);
      losses[s] = lr.loss;
      hits[s] = predict(fwd.counts) == batch.labels[s] ? 1 : 0;
      per_sample[static_cast<std::size_t>(off)] = backward(fwd.trace, net, lr.grad, cfg.surrogate);
    }
    for (std::size_t s = start; s < end; ++s) result.grads.add(per_sample[s - start], scale);
  }
  for (std::size_t s = 0; s < batch.size(); ++s) {
    result.loss += losses[s] * scale;
    result.correct += static_cast<std::size_t>(hits[s]);
  }
  return result;
}

Trainer::Trainer(Network& net, BatchIterator& data, TrainConfig cfg)
    : net_(net), data_(data), cfg_(cfg), opt_(OptimizerState::for_network(net)) {}

std::uint64_t Trainer::epoch() const { return global_step_ / data_.batches_per_epoch(); }

void Trainer::set_global_step(std::uint64_t step) {
  global_step_ = step;
  positioned_ = false;
}

void Trainer::seek(std::uint64_t step) {
  const std::uint64_t bpe = data_.batches_per_epoch();
  data_.start_epoch(step / bpe);
  data_.skip(static_cast<std::size_t>(step % bpe));
  positioned_ = true;
}

StepMetrics Trainer::train_steps(std::size_t n_steps, const StepHook& hook) {
  StepMetrics metrics;
  if (n_steps == 0) return metrics;
  if (data_.batches_per_epoch() == 0) throw Error(ErrorCode::DatasetMissing, "empty training set");
  if (!positioned_) seek(global_step_);

  std::size_t correct = 0;
  std::size_t seen = 0;
  Batch batch;
  for (std::size_t i = 0; i < n_steps; ++i) {
    if (!data_.next(batch)) {
      data_.start_epoch(data_.epoch() + 1);
      data_.next(batch);
    }
    const BatchResult br = batch_gradients(net_, batch, cfg_);
    adam_step(net_, br.grads, opt_, cfg_.adam);
    ++global_step_;
    metrics.step_losses.push_back(br.loss);
    metrics.mean_loss += br.loss;
    correct += br.correct;
    seen += br.samples;
    if (hook) hook(global_step_, net_);
  }
  metrics.steps = n_steps;
  metrics.mean_loss /= static_cast<double>(n_steps);
  metrics.accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
  return metrics;
}

StepMetrics Trainer::train_epochs(std::size_t epochs, const StepHook& hook) {
  return train_steps(epochs * data_.batches_per_epoch(), hook);
}

EvalResult evaluate(const Network& net, BatchIterator& data, const TrainConfig& cfg) {
  const std::size_t classes = net.layers.back().outputs();
  EvalResult r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  const ForwardOptions opts = forward_options_for(cfg, false);
  data.start_epoch(0);
  Batch batch;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  while (data.next(batch)) {
    const auto n = static_cast<std::ptrdiff_t>(batch.size());
    std::vector<int> pred(batch.size());
    std::vector<double> loss(batch.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t s = 0; s < n; ++s) {
      const auto k = static_cast<std::size_t>(s);
      const auto fwd = network_forward(net, batch.inputs[k].values, opts);
      pred[k] = predict(fwd.counts);
      loss[k] = loss_and_grad(fwd.counts, batch.labels[k], cfg.loss).loss;
    }
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto label = static_cast<std::size_t>(batch.labels[k]);
      if (label >= classes) throw Error(ErrorCode::ShapeMismatch, "label exceeds output classes");
      r.confusion[label][static_cast<std::size_t>(pred[k])] += 1;
      if (pred[k] == batch.labels[k]) ++correct;
      loss_sum += loss[k];
      ++r.samples;
    }
  }
  if (r.samples) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.samples);
    r.mean_loss = loss_sum / static_cast<double>(r.samples);
  }
  return r;
}

}  // namespace axdelay
