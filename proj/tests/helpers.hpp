#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "axdelay/layers.hpp"
#include "axdelay/spike_data.hpp"
#include "oracles.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("axdelay_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline oracle::Grid to_grid(const axdelay::Matrix& m) {
  oracle::Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) g[r][c] = m(r, c);
  return g;
}

inline std::vector<oracle::Layer> to_oracle(const axdelay::Network& net) {
  std::vector<oracle::Layer> out;
  for (const auto& p : net.layers) {
    oracle::Layer L;
    L.W = to_grid(p.W);
    L.b = p.b;
    if (p.has_delay) L.d = p.d;
    out.push_back(std::move(L));
  }
  return out;
}

inline axdelay::Matrix random_spikes(std::size_t rows, std::size_t T, double rate,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution spike(rate);
  axdelay::Matrix m(rows, T);
  for (double& v : m.flat()) v = spike(rng) ? 1.0 : 0.0;
  return m;
}

inline axdelay::Network toy_network(const std::vector<std::size_t>& sizes,
                                    const std::vector<bool>& delays, std::uint64_t seed,
                                    double delay_max = 0.0) {
  axdelay::NetworkConfig nc;
  nc.layer_sizes = sizes;
  nc.delay_on_layer = delays;
  nc.kernel = axdelay::make_kernel_config(1.0, 1.0, 10.0, 1.0);
  return axdelay::make_network(nc, seed, axdelay::InitConfig{4.0, delay_max});
}

// Random event files plus a manifest in `dir`.
inline fs::path write_random_dataset(const fs::path& dir, const std::string& name,
                                     std::size_t samples, std::uint16_t channels, int classes,
                                     std::uint32_t duration_us, std::size_t events_per_sample,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  fs::create_directories(dir / name);
  axdelay::DatasetManifest m;
  m.num_classes = classes;
  m.channel_count = channels;
  for (std::size_t i = 0; i < samples; ++i) {
    axdelay::EventStream es;
    es.channel_count = channels;
    es.duration_us = duration_us;
    std::uniform_int_distribution<std::uint32_t> t(0, duration_us);
    std::uniform_int_distribution<std::uint16_t> c(0, static_cast<std::uint16_t>(channels - 1));
    for (std::size_t e = 0; e < events_per_sample; ++e) es.events.push_back({t(rng), c(rng)});
    const fs::path file = dir / name / ("s" + std::to_string(i) + ".spk");
    axdelay::write_events(es, file);
    m.entries.push_back({file, static_cast<int>(i % static_cast<std::size_t>(classes))});
  }
  const fs::path manifest = dir / (name + ".tsv");
  axdelay::write_manifest(m, manifest);
  return manifest;
}

}  // namespace testutil

#include <cmath>

#include "axdelay/autograd.hpp"

namespace testutil {

struct GradError {
  double W = 0.0, b = 0.0, d = 0.0;
};

inline double rel_error(const std::vector<double>& g, const std::vector<double>& fd) {
  double diff = 0, ng = 0, nf = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    diff += (g[i] - fd[i]) * (g[i] - fd[i]);
    ng += g[i] * g[i];
    nf += fd[i] * fd[i];
  }
  const double scale = std::max({std::sqrt(ng), std::sqrt(nf), 1e-12});
  return std::sqrt(diff) / scale;
}

// Analytic gradients of a relaxed 3-4-2 network (interpolated delays on the
// hidden layer) against central finite differences of the same loss.
inline GradError relaxed_gradient_check(std::uint64_t seed, std::size_t T = 32) {
  using namespace axdelay;
  Network net = toy_network({3, 4, 2}, {true, false}, seed);
  std::mt19937_64 rng(seed * 7919 + 1);
  std::uniform_real_distribution<double> frac(0.3, 0.7);
  for (double& d : net.layers[0].d) d = static_cast<double>(rng() % 6) + frac(rng);
  const Matrix x = random_spikes(3, T, 0.3, seed + 1000);
  const int label = static_cast<int>(seed % 2);

  TrainConfig tc;
  tc.loss = {LossKind::count_mse, 8.0, 2.0};
  tc.surrogate.mode = SpikeMode::relaxed;
  tc.surrogate.refractory_grad = true;
  tc.delay_mode = DelayMode::interpolate;
  const ForwardOptions fo = forward_options_for(tc, true);

  auto loss_of = [&](const Network& n) {
    return loss_and_grad(network_forward(n, x, fo).counts, label, tc.loss).loss;
  };
  const auto fwd = network_forward(net, x, fo);
  const auto lr = loss_and_grad(fwd.counts, label, tc.loss);
  const Gradients g = backward(fwd.trace, net, lr.grad, tc.surrogate);

  auto fd_of = [&](double& param, double h) {
    const double keep = param;
    param = keep + h;
    const double up = loss_of(net);
    param = keep - h;
    const double down = loss_of(net);
    param = keep;
    return (up - down) / (2 * h);
  };

  std::vector<double> gW, fW, gb, fb, gd, fdd;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& p = net.layers[l];
    for (std::size_t i = 0; i < p.W.size(); ++i) {
      gW.push_back(g.layers[l].dW.flat()[i]);
      fW.push_back(fd_of(p.W.flat()[i], 1e-5));
    }
    for (std::size_t i = 0; i < p.b.size(); ++i) {
      gb.push_back(g.layers[l].db[i]);
      fb.push_back(fd_of(p.b[i], 1e-5));
    }
    for (std::size_t i = 0; i < p.d.size(); ++i) {
      gd.push_back(g.layers[l].dd[i]);
      fdd.push_back(fd_of(p.d[i], 1e-5));
    }
  }
  return {rel_error(gW, fW), rel_error(gb, fb), rel_error(gd, fdd)};
}

}  // namespace testutil
