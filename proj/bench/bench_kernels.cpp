// Serial reference vs OpenMP kernels. Prints median wall time per call and
// the speedup, and checks the two paths agree.
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "axdelay/autograd.hpp"
#include "axdelay/harness.hpp"
#include "axdelay/kernels.hpp"
#include "axdelay/layers.hpp"
#include "axdelay/reference.hpp"

using namespace axdelay;

namespace {

double median_ms(const std::function<void()>& fn, int reps) {
  std::vector<double> times;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

Matrix random_spikes(std::size_t rows, std::size_t T, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution spike(rate);
  Matrix m(rows, T);
  for (double& v : m.flat()) v = spike(rng) ? 1.0 : 0.0;
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.flat()[i] - b.flat()[i]));
  return d;
}

void report(const char* name, double serial, double parallel, double diff) {
  std::printf("%-22s serial %9.3f ms  omp %9.3f ms  speedup %5.2fx  max|diff| %.2e\n", name, serial,
              parallel, serial / parallel, diff);
}

}  // namespace

int main() {
  tune_allocator();
  std::printf("threads: %d\n", omp_get_max_threads());
  std::mt19937_64 rng(7);
  const std::size_t T = 1000;
  const KernelConfig kc = make_kernel_config(1.0, 1.0, 10.0, 1.0);
  const auto eps = response_kernel(kc);

  // Input of SHD width.
  const Matrix x = random_spikes(700, T, 0.02, rng);
  Matrix a_ref, a_omp;
  const double conv_s = median_ms([&] { a_ref = reference::causal_conv(x, eps); }, 5);
  const double conv_p = median_ms([&] { a_omp = causal_conv(x, eps); }, 5);
  report("causal_conv 700x1000", conv_s, conv_p, max_abs_diff(a_ref, a_omp));

  Matrix g_ref, g_omp;
  const double cor_s = median_ms([&] { g_ref = reference::causal_correlate(a_ref, eps); }, 5);
  const double cor_p = median_ms([&] { g_omp = causal_correlate(a_ref, eps); }, 5);
  report("causal_correlate", cor_s, cor_p, max_abs_diff(g_ref, g_omp));

  NetworkConfig nc;
  nc.layer_sizes = {700, 128, 128, 20};
  nc.delay_on_layer = {true, true, false};
  nc.kernel = kc;
  const Network net = make_network(nc, 3, InitConfig{});
  const auto& W = net.layers[0].W;
  Matrix z_ref, z_omp;
  const double dd_s = median_ms([&] { z_ref = reference::dense_drive(W, net.layers[0].b, a_ref); }, 5);
  const double dd_p = median_ms([&] { z_omp = detail::dense_drive(W, net.layers[0].b, a_ref); }, 5);
  report("dense_drive 128x700", dd_s, dd_p, max_abs_diff(z_ref, z_omp));

  ForwardOptions fo;
  ForwardResult f_ref, f_omp;
  const double fw_s = median_ms([&] { f_ref = reference::network_forward(net, x, fo); }, 3);
  const double fw_p = median_ms([&] { f_omp = network_forward(net, x, fo); }, 3);
  double cdiff = 0.0;
  for (std::size_t i = 0; i < f_ref.counts.size(); ++i)
    cdiff = std::max(cdiff, std::abs(f_ref.counts[i] - f_omp.counts[i]));
  report("network_forward", fw_s, fw_p, cdiff);

  Batch batch;
  for (int i = 0; i < 32; ++i) {
    batch.inputs.push_back(SpikeTensor{random_spikes(700, T, 0.02, rng), 1.0});
    batch.labels.push_back(i % 20);
    batch.indices.push_back(static_cast<std::size_t>(i));
  }
  TrainConfig tc;
  BatchResult b_ref, b_omp;
  const double bg_s = median_ms([&] { b_ref = reference::batch_gradients(net, batch, tc); }, 1);
  const double bg_p = median_ms([&] { b_omp = batch_gradients(net, batch, tc); }, 1);
  double gdiff = 0.0;
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    gdiff = std::max(gdiff, max_abs_diff(b_ref.grads.layers[l].dW, b_omp.grads.layers[l].dW));
  report("batch_gradients x32", bg_s, bg_p, gdiff);
  return 0;
}
