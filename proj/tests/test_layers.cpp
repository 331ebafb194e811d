#include <doctest.h>

#include <cmath>
#include <random>

#include "axdelay/error.hpp"
#include "axdelay/layers.hpp"
#include "axdelay/reference.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace axdelay;

namespace {

LayerParams single_neuron(double w, double b) {
  LayerParams p;
  p.W = Matrix(1, 1);
  p.W(0, 0) = w;
  p.b = {b};
  return p;
}

Matrix row_with_spikes(std::size_t T, std::initializer_list<std::size_t> ts) {
  Matrix m(1, T);
  for (auto t : ts) m(0, t) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("srm_forward: zero network is silent") {
  LayerParams p;
  p.W = Matrix(3, 5);
  p.b.assign(3, 0.0);
  const auto out = srm_forward(p, testutil::random_spikes(5, 40, 0.5, 1), KernelConfig{});
  for (double v : out.u.flat()) CHECK(v == 0.0);
  for (double v : out.s.flat()) CHECK(v == 0.0);
}

TEST_CASE("srm_forward: first spike where W*eps crosses threshold") {
  for (double tau : {1.0, 2.0, 4.0, 6.5}) {
    const KernelConfig kc = make_kernel_config(tau, tau, 10.0, 0.25);
    const double w = 2.0 * kc.theta_u;  // eps peaks at 1
    const auto out = srm_forward(single_neuron(w, 0.0), row_with_spikes(200, {0}), kc);
    std::size_t want = 0;
    while (w * oracle::eps(static_cast<double>(want) * kc.dt_ms, tau) < kc.theta_u) ++want;
    std::size_t got = 0;
    while (got < 200 && out.s(0, got) == 0.0) ++got;
    CHECK(got == want);
  }
}

TEST_CASE("srm_forward: constant suprathreshold drive against a scalar simulation") {
  const KernelConfig kc = make_kernel_config(1.0, 3.0, 10.0, 1.0);
  const double b = 12.0;
  const std::size_t T = 80;
  const auto out = srm_forward(single_neuron(0.0, b), Matrix(1, T), kc);
  std::vector<double> s(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double u = b;
    for (std::size_t k = 1; k < kc.truncation && k <= t; ++k)
      u += oracle::nu(static_cast<double>(k), kc.tau_r, kc.theta_u) * s[t - k];
    s[t] = u >= kc.theta_u ? 1.0 : 0.0;
  }
  CHECK(out.s(0, 0) == 1.0);
  std::size_t spikes = 0;
  for (std::size_t t = 0; t < T; ++t) {
    CHECK(out.s(0, t) == s[t]);
    spikes += s[t] > 0 ? 1 : 0;
  }
  CHECK(spikes > 2);
}

TEST_CASE("srm_forward: threshold is inclusive") {
  const auto out = srm_forward(single_neuron(0.0, 10.0), Matrix(1, 3), KernelConfig{});
  CHECK(out.s(0, 0) == 1.0);
}

TEST_CASE("srm_forward: shape mismatch") {
  CHECK_THROWS_AS(srm_forward(single_neuron(1, 0), Matrix(2, 5), KernelConfig{}), Error);
}

TEST_CASE("axonal delay: examples") {
  const double dt = 1.0;
  SUBCASE("zero delay is identity") {
    const auto s = testutil::random_spikes(4, 30, 0.3, 2);
    CHECK(axonal_delay_forward(s, std::vector<double>(4, 0.0), dt) == s);
  }
  SUBCASE("spike at 5 with d=3 lands at 8") {
    const Matrix out = axonal_delay_forward(row_with_spikes(20, {5}), std::vector<double>{3.0}, dt);
    CHECK(out == row_with_spikes(20, {8}));
  }
  SUBCASE("spike at T-1 with d=2 is dropped") {
    const Matrix out = axonal_delay_forward(row_with_spikes(20, {19}), std::vector<double>{2.0}, dt);
    CHECK(out == Matrix(1, 20));
  }
  SUBCASE("rounding is half to even") {
    const auto s = row_with_spikes(20, {0});
    CHECK(axonal_delay_forward(s, std::vector<double>{2.5}, dt) == row_with_spikes(20, {2}));
    CHECK(axonal_delay_forward(s, std::vector<double>{3.5}, dt) == row_with_spikes(20, {4}));
    CHECK(axonal_delay_forward(s, std::vector<double>{3.49}, dt) == row_with_spikes(20, {3}));
  }
  SUBCASE("delay in ms on a coarser grid") {
    const auto s = row_with_spikes(20, {1});
    CHECK(axonal_delay_forward(s, std::vector<double>{6.0}, 2.0) == row_with_spikes(20, {4}));
  }
  SUBCASE("huge delay empties the row") {
    CHECK(axonal_delay_forward(row_with_spikes(5, {0}), std::vector<double>{1e9}, dt) == Matrix(1, 5));
  }
}

TEST_CASE("interpolated delay splits mass between neighbouring shifts") {
  const Matrix out =
      axonal_delay_interpolated(row_with_spikes(10, {2}), std::vector<double>{1.25}, 1.0);
  CHECK(out(0, 3) == doctest::Approx(0.75));
  CHECK(out(0, 4) == doctest::Approx(0.25));
  double sum = 0;
  for (double v : out.flat()) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  // Integer delays reduce to the plain shift.
  const auto s = testutil::random_spikes(3, 25, 0.3, 4);
  const std::vector<double> d{0.0, 2.0, 7.0};
  CHECK(axonal_delay_interpolated(s, d, 1.0) == axonal_delay_forward(s, d, 1.0));
}

TEST_CASE("delay shifts compose within the horizon") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = testutil::random_spikes(5, 60, 0.2, static_cast<std::uint64_t>(trial));
    std::vector<double> d1(5), d2(5), d12(5);
    for (std::size_t i = 0; i < 5; ++i) {
      d1[i] = static_cast<double>(rng() % 20);
      d2[i] = static_cast<double>(rng() % 20);
      d12[i] = d1[i] + d2[i];
    }
    const Matrix twice = axonal_delay_forward(axonal_delay_forward(s, d1, 1.0), d2, 1.0);
    CHECK(twice == axonal_delay_forward(s, d12, 1.0));
  }
}

TEST_CASE("clip_delays: examples and properties") {
  CHECK(clip_delays(std::vector<double>{-3.0}, 64.0)[0] == 0.0);
  CHECK(clip_delays(std::vector<double>{70.0}, 64.0)[0] == 64.0);
  CHECK(clip_delays(std::vector<double>{12.0}, 64.0)[0] == 12.0);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-50.0, 150.0), cap(0.0, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> d(16);
    for (double& v : d) v = u(rng);
    const double lo = cap(rng), hi = lo + cap(rng);
    const auto once = clip_delays(d, lo);
    CHECK(clip_delays(once, lo) == once);
    const auto wider = clip_delays(d, hi);
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(wider[i] >= once[i]);
      CHECK(once[i] >= 0.0);
      CHECK(once[i] <= lo);
    }
    std::vector<double> inplace = d;
    clip_delays_inplace(inplace, lo);
    CHECK(inplace == once);
  }
}

TEST_CASE("count_params matches the published network sizes") {
  NetworkConfig shd;
  shd.layer_sizes = {700, 128, 128, 20};
  shd.delay_on_layer = {true, true, false};
  CHECK(count_params(shd) == 109076);
  shd.delay_on_layer = {false, false, false};
  CHECK(count_params(shd) == 108820);
  NetworkConfig nti;
  nti.layer_sizes = {64, 256, 256, 11};
  nti.delay_on_layer = {true, true, false};
  CHECK(count_params(nti) == 85771);
  nti.delay_on_layer = {false, false, false};
  CHECK(count_params(nti) == 85259);
}

TEST_CASE("network config validation") {
  NetworkConfig c;
  c.layer_sizes = {3, 4};
  c.delay_on_layer = {false, false};
  CHECK_THROWS_AS(c.validate(), Error);
  c.delay_on_layer = {false};
  CHECK_NOTHROW(c.validate());
  c.layer_sizes = {3, 0};
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("make_network: init ranges and determinism") {
  const Network a = testutil::toy_network({9, 6, 3}, {true, false}, 5);
  const Network b = testutil::toy_network({9, 6, 3}, {true, false}, 5);
  const Network c = testutil::toy_network({9, 6, 3}, {true, false}, 6);
  CHECK(a.layers[0].W == b.layers[0].W);
  CHECK(!(a.layers[0].W == c.layers[0].W));
  const double w0 = 4.0 * 10.0 / (1.0 * std::sqrt(9.0));
  for (double v : a.layers[0].W.flat()) CHECK(std::abs(v) <= w0);
  for (double v : a.layers[0].b) CHECK(v == 0.0);
  CHECK(a.layers[0].d == std::vector<double>(6, 0.0));
  CHECK(a.layers[1].d.empty());
  CHECK(a.theta_d[0] == 64.0);
  CHECK(a.theta_d[1] == 0.0);
  const Network r = testutil::toy_network({9, 6, 3}, {true, false}, 5, 10.0);
  for (double v : r.layers[0].d) {
    CHECK(v >= 0.0);
    CHECK(v <= 10.0);
  }
}

TEST_CASE("network_forward: composition and base cases") {
  SUBCASE("silent input gives zero counts") {
    const Network net = testutil::toy_network({5, 4, 3}, {true, false}, 1);
    const auto r = network_forward(net, Matrix(5, 30));
    CHECK(r.counts == std::vector<double>(3, 0.0));
    CHECK(r.trace.empty());
  }
  SUBCASE("single layer equals srm_forward plus a count") {
    const Network net = testutil::toy_network({5, 3}, {false}, 2);
    const auto x = testutil::random_spikes(5, 40, 0.3, 3);
    const auto r = network_forward(net, x);
    const auto s = srm_forward(net.layers[0], x, net.config.kernel);
    for (std::size_t i = 0; i < 3; ++i) {
      double c = 0;
      for (double v : s.s.row(i)) c += v;
      CHECK(r.counts[i] == c);
    }
  }
  SUBCASE("shape mismatch") {
    const Network net = testutil::toy_network({5, 3}, {false}, 2);
    CHECK_THROWS_AS(network_forward(net, Matrix(4, 10)), Error);
  }
}

TEST_CASE("network_forward: two hidden layers against the scalar oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Network net = testutil::toy_network({6, 8, 7, 3}, {true, true, false}, seed, 12.0);
    const auto x = testutil::random_spikes(6, 48, 0.25, seed + 100);
    ForwardOptions fo;
    fo.retain_trace = true;
    const auto r = network_forward(net, x, fo);
    oracle::Kernel kc{1.0, 1.0, 10.0, 1.0, net.config.kernel.truncation};
    const auto o = oracle::network_forward(testutil::to_oracle(net), testutil::to_grid(x), kc);
    for (std::size_t l = 0; l < 3; ++l) {
      CHECK(testutil::to_grid(r.trace.layers[l].s) == o[l].s);
      if (l < 2) CHECK(testutil::to_grid(r.trace.layers[l].s_d) == o[l].s_d);
    }
    for (std::size_t c = 0; c < 3; ++c) {
      double cnt = 0;
      for (double v : o[2].s[c]) cnt += v;
      CHECK(r.counts[c] == cnt);
    }
  }
}

TEST_CASE("network_forward: zero delays equal no delays") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Network with = testutil::toy_network({6, 8, 7, 3}, {true, true, false}, seed);
    Network without = with;
    for (auto& p : without.layers) {
      p.has_delay = false;
      p.d.clear();
    }
    ForwardOptions fo;
    fo.retain_trace = true;
    const auto x = testutil::random_spikes(6, 50, 0.3, seed);
    const auto a = network_forward(with, x, fo);
    const auto b = network_forward(without, x, fo);
    CHECK(a.counts == b.counts);
    for (std::size_t l = 0; l < 3; ++l) CHECK(a.trace.layers[l].output() == b.trace.layers[l].output());
  }
}

TEST_CASE("network_forward: causal end to end, binary spikes") {
  const Network net = testutil::toy_network({6, 8, 7, 3}, {true, true, false}, 3, 9.0);
  const auto x = testutil::random_spikes(6, 60, 0.3, 17);
  ForwardOptions fo;
  fo.retain_trace = true;
  const auto full = network_forward(net, x, fo);
  for (const auto& lt : full.trace.layers)
    for (double v : lt.s.flat()) CHECK((v == 0.0 || v == 1.0));
  for (std::size_t cut : {5u, 20u, 41u}) {
    Matrix xt = x;
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t t = cut + 1; t < 60; ++t) xt(c, t) = 0.0;
    const auto part = network_forward(net, xt, fo);
    for (std::size_t l = 0; l < 3; ++l) {
      const Matrix& a = full.trace.layers[l].output();
      const Matrix& b = part.trace.layers[l].output();
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t t = 0; t <= cut; ++t) CHECK(a(i, t) == b(i, t));
    }
  }
}

TEST_CASE("network_forward: OpenMP path equals the serial reference") {
  const Network net = testutil::toy_network({20, 16, 16, 4}, {true, true, false}, 9, 20.0);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto x = testutil::random_spikes(20, 100, 0.1, seed);
    for (auto mode : {SpikeMode::spiking, SpikeMode::relaxed}) {
      ForwardOptions fo;
      fo.retain_trace = true;
      fo.spike_mode = mode;
      const auto a = network_forward(net, x, fo);
      const auto b = reference::network_forward(net, x, fo);
      for (std::size_t l = 0; l < 3; ++l) {
        const auto& ua = a.trace.layers[l].u.flat();
        const auto& ub = b.trace.layers[l].u.flat();
        for (std::size_t i = 0; i < ua.size(); ++i) CHECK(std::abs(ua[i] - ub[i]) < 1e-9);
        if (mode == SpikeMode::spiking) CHECK(a.trace.layers[l].s == b.trace.layers[l].s);
      }
    }
  }
}

TEST_CASE("predict breaks ties toward the lowest index") {
  CHECK(predict(std::vector<double>{0, 0, 0}) == 0);
  CHECK(predict(std::vector<double>{1, 3, 3}) == 1);
  CHECK(predict(std::vector<double>{1, 2, 5}) == 2);
}
