#include <doctest.h>

#include <cmath>
#include <random>

#include "axdelay/error.hpp"
#include "axdelay/kernels.hpp"
#include "axdelay/reference.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace axdelay;

TEST_CASE("response kernel closed-form points") {
  for (double tau : {1.0, 2.0, 5.0}) {
    KernelConfig c = make_kernel_config(tau, tau, 10.0, 1.0);
    c.truncation = static_cast<std::size_t>(2 * tau) + 1;
    const auto e = response_kernel(c);
    CHECK(e[0] == 0.0);
    CHECK(std::abs(e[static_cast<std::size_t>(tau)] - 1.0) < 1e-12);
    CHECK(std::abs(e[static_cast<std::size_t>(2 * tau)] - 2.0 / std::exp(1.0)) < 1e-12);
  }
  CHECK(std::abs(2.0 / std::exp(1.0) - 0.735759) < 1e-6);
}

TEST_CASE("refractory kernel closed-form points") {
  KernelConfig c = make_kernel_config(1.0, 1.0, 10.0, 1.0);
  const auto n = refractory_kernel(c);
  CHECK(n[0] == 0.0);
  CHECK(std::abs(n[1] + 20.0) < 1e-12);
  KernelConfig c5 = make_kernel_config(5.0, 5.0, 7.0, 1.0);
  CHECK(std::abs(refractory_kernel(c5)[5] + 14.0) < 1e-12);
}

TEST_CASE("kernels match the oracle, keep sign and peak") {
  for (double tau : {0.7, 1.0, 3.3, 5.0}) {
    const KernelConfig c = make_kernel_config(tau, tau * 1.5, 10.0, 0.5);
    const auto e = response_kernel(c);
    const auto n = refractory_kernel(c);
    REQUIRE(e.size() == c.truncation);
    REQUIRE(n.size() == c.truncation);
    double emax = 0, nmin = 0;
    for (std::size_t k = 0; k < e.size(); ++k) {
      const double t = static_cast<double>(k) * c.dt_ms;
      CHECK(std::abs(e[k] - oracle::eps(t, c.tau_s)) < 1e-12);
      CHECK(std::abs(n[k] - oracle::nu(t, c.tau_r, c.theta_u)) < 1e-12);
      CHECK(e[k] >= 0.0);
      CHECK(n[k] <= 0.0);
      emax = std::max(emax, e[k]);
      nmin = std::min(nmin, n[k]);
    }
    CHECK(emax <= 1.0 + 1e-12);
    CHECK(nmin >= -2.0 * c.theta_u - 1e-12);
    // Within one grid step of the analytic extremum.
    CHECK(emax >= oracle::eps(c.tau_s + c.dt_ms, c.tau_s) - 1e-12);
  }
}

TEST_CASE("default truncation") {
  CHECK(default_truncation(1.0, 1.0, 1.0) == 8);
  CHECK(default_truncation(5.0, 5.0, 1.0) == 40);
  CHECK(default_truncation(0.1, 0.1, 1.0) >= 2);
  // At the cutoff the kernel has decayed below 1e-3 of its peak, or the cap applied.
  const std::size_t K = default_truncation(2.0, 3.0, 0.5);
  CHECK(K <= static_cast<std::size_t>(std::ceil(8 * 3.0 / 0.5)));
}

TEST_CASE("kernel config validation") {
  KernelConfig c;
  c.tau_s = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = KernelConfig{};
  c.truncation = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK_NOTHROW(KernelConfig{}.validate());
}

TEST_CASE("causal_conv: impulse copies the kernel, truncated at T") {
  const std::vector<double> k{0.0, 1.0, 0.5, 0.25};
  Matrix s(1, 6);
  s(0, 3) = 1.0;
  const Matrix out = causal_conv(s, k);
  const std::vector<double> want{0, 0, 0, 0.0, 1.0, 0.5};
  for (std::size_t t = 0; t < 6; ++t) CHECK(out(0, t) == want[t]);
}

TEST_CASE("causal_conv: linearity") {
  const auto x = testutil::random_spikes(3, 40, 0.3, 1);
  const auto y = testutil::random_spikes(3, 40, 0.3, 2);
  const KernelConfig c = make_kernel_config(2.0, 2.0, 10.0, 1.0);
  const auto e = response_kernel(c);
  Matrix mix(3, 40);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.flat()[i] = 2.0 * x.flat()[i] - 0.5 * y.flat()[i];
  const Matrix cx = causal_conv(x, e), cy = causal_conv(y, e), cm = causal_conv(mix, e);
  for (std::size_t i = 0; i < cm.size(); ++i)
    CHECK(std::abs(cm.flat()[i] - (2.0 * cx.flat()[i] - 0.5 * cy.flat()[i])) < 1e-12);
}

TEST_CASE("causal_conv: random 3x32, K=8 against a double loop") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix s(3, 32);
  for (double& v : s.flat()) v = u(rng);
  std::vector<double> k(8);
  for (double& v : k) v = u(rng);
  const Matrix out = causal_conv(s, k);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 32; ++t) {
      double want = 0;
      for (std::size_t j = 0; j <= t; ++j)
        if (t - j < 8) want += k[t - j] * s(c, j);
      CHECK(std::abs(out(c, t) - want) < 1e-12);
    }
}

TEST_CASE("causal_conv: causality") {
  const auto x = testutil::random_spikes(4, 50, 0.2, 8);
  const auto e = response_kernel(make_kernel_config(3.0, 3.0, 10.0, 1.0));
  const Matrix full = causal_conv(x, e);
  for (std::size_t cut : {0u, 10u, 33u, 49u}) {
    Matrix trunc = x;
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t t = cut + 1; t < 50; ++t) trunc(c, t) = 0.0;
    const Matrix part = causal_conv(trunc, e);
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t t = 0; t <= cut; ++t) CHECK(part(c, t) == full(c, t));
  }
}

TEST_CASE("causal_correlate is the adjoint of causal_conv") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix x(2, 30), g(2, 30);
  for (double& v : x.flat()) v = u(rng);
  for (double& v : g.flat()) v = u(rng);
  const auto e = response_kernel(make_kernel_config(2.0, 2.0, 10.0, 1.0));
  const Matrix cx = causal_conv(x, e);
  const Matrix cg = causal_correlate(g, e);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lhs += cx.flat()[i] * g.flat()[i];
    rhs += x.flat()[i] * cg.flat()[i];
  }
  CHECK(std::abs(lhs - rhs) < 1e-10);
}

TEST_CASE("OpenMP kernels agree with the serial reference") {
  const auto e = response_kernel(make_kernel_config(5.0, 5.0, 10.0, 1.0));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = testutil::random_spikes(37, 120, 0.1, seed);
    const Matrix a = causal_conv(x, e);
    const Matrix ar = reference::causal_conv(x, e);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.flat()[i] - ar.flat()[i]) < 1e-12);
    const Matrix g = causal_correlate(a, e);
    const Matrix gr = reference::causal_correlate(a, e);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(g.flat()[i] - gr.flat()[i]) < 1e-10);
  }
}
