#pragma once

// Independent reference computations for tests. Nothing here calls the
// library's kernels, layers or scheduler; every value is recomputed from the
// closed forms with plain nested loops.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<double>>;  // [row][t]

inline double eps(double t, double tau_s) {
  if (t <= 0.0) return 0.0;
  return (t / tau_s) * std::exp(1.0 - t / tau_s);
}

inline double nu(double t, double tau_r, double theta_u) {
  if (t <= 0.0) return 0.0;
  return -2.0 * theta_u * (t / tau_r) * std::exp(1.0 - t / tau_r);
}

// Round half to even without relying on the floating-point environment.
inline long round_half_even(double x) {
  const double fl = std::floor(x);
  const double diff = x - fl;
  const long lo = static_cast<long>(fl);
  if (diff > 0.5) return lo + 1;
  if (diff < 0.5) return lo;
  return (lo % 2 == 0) ? lo : lo + 1;
}

struct Layer {
  Grid W;  // [out][in]
  std::vector<double> b;
  std::vector<double> d;  // empty: no delay
};

struct Kernel {
  double tau_s = 1.0, tau_r = 1.0, theta_u = 10.0, dt = 1.0;
  std::size_t K = 8;
};

struct LayerOut {
  Grid u, s, s_d;
};

// u_i(t) = b_i + sum_j W_ij sum_{k<K, k<=t} eps(k dt) x_j(t-k) + sum_{1<=k<K} nu(k dt) s_i(t-k)
inline LayerOut layer_forward(const Layer& L, const Grid& x, const Kernel& kc) {
  const std::size_t n_out = L.W.size();
  const std::size_t n_in = x.size();
  const std::size_t T = x.empty() ? 0 : x[0].size();
  LayerOut o;
  o.u.assign(n_out, std::vector<double>(T, 0.0));
  o.s.assign(n_out, std::vector<double>(T, 0.0));
  for (std::size_t i = 0; i < n_out; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      double drive = L.b[i];
      for (std::size_t j = 0; j < n_in; ++j) {
        double a = 0.0;
        for (std::size_t k = 0; k < kc.K && k <= t; ++k)
          a += eps(static_cast<double>(k) * kc.dt, kc.tau_s) * x[j][t - k];
        drive += L.W[i][j] * a;
      }
      double refr = 0.0;
      for (std::size_t k = 1; k < kc.K && k <= t; ++k)
        refr += nu(static_cast<double>(k) * kc.dt, kc.tau_r, kc.theta_u) * o.s[i][t - k];
      o.u[i][t] = drive + refr;
      o.s[i][t] = o.u[i][t] >= kc.theta_u ? 1.0 : 0.0;
    }
  }
  if (!L.d.empty()) {
    o.s_d.assign(n_out, std::vector<double>(T, 0.0));
    for (std::size_t i = 0; i < n_out; ++i) {
      const long shift = round_half_even(std::max(0.0, L.d[i] / kc.dt));
      for (std::size_t t = 0; t < T; ++t) {
        const long dst = static_cast<long>(t) + shift;
        if (dst < static_cast<long>(T)) o.s_d[i][static_cast<std::size_t>(dst)] = o.s[i][t];
      }
    }
  }
  return o;
}

inline std::vector<LayerOut> network_forward(const std::vector<Layer>& layers, const Grid& input,
                                             const Kernel& kc) {
  std::vector<LayerOut> outs;
  Grid x = input;
  for (const Layer& L : layers) {
    outs.push_back(layer_forward(L, x, kc));
    x = L.d.empty() ? outs.back().s : outs.back().s_d;
  }
  return outs;
}

// Straight-line Algorithm 1 over scripted delay vectors. `delays_at(round,
// layer)` returns the layer's delays as seen after `round` training blocks.
struct ScheduleStep {
  std::size_t layer;
  std::size_t round;
  double alpha;
  double theta;
  bool grow;
};

struct ScheduleOutcome {
  std::vector<ScheduleStep> steps;
  std::vector<double> caps;
  bool ceiling_hit = false;
};

inline ScheduleOutcome algorithm1(
    std::size_t layers, double initial_cap, std::size_t m, double alpha_theta, double ceiling,
    const std::function<std::vector<double>(std::size_t trained, std::size_t layer)>& delays_at) {
  ScheduleOutcome out;
  out.caps.assign(layers, initial_cap);
  std::vector<bool> growing(layers, true);
  std::size_t trained = 0;
  for (std::size_t round = 0;; ++round) {
    bool any_growing = false;
    for (bool g : growing) any_growing = any_growing || g;
    if (!any_growing) break;
    bool any_grew = false;
    for (std::size_t l = 0; l < layers; ++l) {
      if (!growing[l]) continue;
      const auto d = delays_at(trained, l);
      std::map<long, std::size_t> count;
      long top = 0;
      for (double v : d) {
        const long bin = round_half_even(std::max(0.0, v));
        ++count[bin];
        if (bin > top) top = bin;
      }
      std::size_t in_window = 0;
      for (long bin = top - static_cast<long>(m) + 1; bin <= top; ++bin)
        if (bin >= 0 && count.count(bin)) in_window += count[bin];
      const double alpha = static_cast<double>(in_window) / static_cast<double>(d.size());
      const bool grow = alpha > alpha_theta;
      if (grow) {
        out.caps[l] += 1.0;
        if (out.caps[l] > ceiling) {
          out.ceiling_hit = true;
          return out;
        }
        any_grew = true;
      } else {
        growing[l] = false;
      }
      out.steps.push_back({l, round, alpha, out.caps[l], grow});
    }
    if (any_grew) ++trained;
  }
  return out;
}

}  // namespace oracle
