#include <chrono>
#include <cmath>

#include "cfcf/cfloss.hpp"
#include "cfcf/spectral.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace cfcf;
using namespace cfcf::cfloss;
using cfcf::oracle::max_abs_diff;

namespace {

FeatureStack single(RealGrid g) { return FeatureStack(std::vector<RealGrid>{std::move(g)}); }

RealGrid row(std::initializer_list<double> v) {
  RealGrid g(1, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), g.begin());
  return g;
}

struct Instance {
  FeatureStack x;
  FeatureStack y;
  RealGrid g;
  RealGrid g_hat;
};

Instance random_instance(int d, int h, int w, std::mt19937_64& rng) {
  Instance in{oracle::random_stack(d, h, w, rng), oracle::random_stack(d, h, w, rng),
              RealGrid(h, w), RealGrid(h, w)};
  std::uniform_int_distribution<int> rr(0, h - 1);
  std::uniform_int_distribution<int> cc(0, w - 1);
  const double sigma = std::max(0.5, corrfilter::default_sigma(h, w));
  in.g = corrfilter::make_desired_response(h, w, rr(rng), cc(rng), sigma).grid;
  in.g_hat = corrfilter::make_desired_response(h, w, h / 2, w / 2, sigma).grid;
  return in;
}

// Central difference of the loss with respect to one coordinate of x or y,
// evaluated with the naive (non-FFT) loss.
double fd_naive(const Instance& in, bool wrt_y, int l, std::size_t i, double lambda,
                double step = 1e-6) {
  Instance p = in;
  double& coord = wrt_y ? p.y[l][i] : p.x[l][i];
  const double base = coord;
  coord = base + step;
  const double plus = oracle::naive_cf_loss(p.x, p.y, p.g, p.g_hat, lambda);
  coord = base - step;
  const double minus = oracle::naive_cf_loss(p.x, p.y, p.g, p.g_hat, lambda);
  return (plus - minus) / (2.0 * step);
}

}  // namespace

TEST_CASE("forward_loss basics") {
  std::mt19937_64 rng(21);
  SUBCASE("x = 0 gives ||g||^2") {
    Instance in = random_instance(2, 6, 6, rng);
    for (auto& m : in.x) std::fill(m.begin(), m.end(), 0.0);
    double norm = 0.0;
    for (double v : in.g) norm += v * v;
    CHECK(forward_loss(in.x, in.y, in.g, in.g_hat, 0.01).loss == doctest::Approx(norm));
  }
  SUBCASE("x = y with vanishing lambda and zero shift gives vanishing loss") {
    const FeatureStack y = oracle::random_stack(3, 8, 8, rng);
    const auto g = corrfilter::make_centered_response(8, 8);
    const double l1 = forward_loss(y, y, g, 1e-4).loss;
    const double l2 = forward_loss(y, y, g, 1e-8).loss;
    CHECK(l2 < l1);
    CHECK(l2 < 1e-12);
  }
  SUBCASE("1x4 hand instance matches the spatial evaluation") {
    const FeatureStack y = single(row({1, 0, 0, 0}));
    const FeatureStack x = single(row({0, 1, 0, 0}));
    const RealGrid g = row({0, 1, 0, 0});
    const RealGrid g_hat = row({0, 0, 1, 0});
    const double loss = forward_loss(x, y, g, g_hat, 0.01).loss;
    CHECK(loss == doctest::Approx(oracle::naive_cf_loss(x, y, g, g_hat, 0.01)).epsilon(1e-12));
    // Y = 1, so h = reverse(g_hat) / 1.01 = [0, 0, 1/1.01, 0] and
    // (h (*) x)[n] = h[2] x[n + 2] = [0, 0, 0, 1/1.01]; e = [0, -1, 0, 1/1.01].
    const double r = 1.0 / 1.01;
    CHECK(loss == doctest::Approx(1.0 + r * r).epsilon(1e-12));
  }
  SUBCASE("errors") {
    Instance in = random_instance(2, 4, 4, rng);
    CHECK_THROWS_AS(forward_loss(in.x, in.y, in.g, in.g_hat, 0.0), NonPositiveLambda);
    CHECK_THROWS_AS(forward_loss(oracle::random_stack(1, 4, 4, rng), in.y, in.g, in.g_hat, 0.1),
                    DimensionMismatch);
    CHECK_THROWS_AS(forward_loss(in.x, in.y, RealGrid(4, 5), in.g_hat, 0.1), DimensionMismatch);
  }
}

TEST_CASE("forward_loss agrees with the naive spatial oracle") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance in = random_instance(2, 5, 7, rng);
    const double loss = forward_loss(in.x, in.y, in.g, in.g_hat, 0.05).loss;
    CHECK(loss == doctest::Approx(oracle::naive_cf_loss(in.x, in.y, in.g, in.g_hat, 0.05))
                      .epsilon(1e-10));
    CHECK(loss >= 0.0);
  }
}

TEST_CASE("grad_wrt_h") {
  std::mt19937_64 rng(23);
  SUBCASE("zero error gives zero gradient") {
    const FeatureStack y = oracle::random_stack(2, 4, 4, rng);
    const auto g = corrfilter::make_centered_response(4, 4);
    auto ws = forward_loss(y, y, g, 0.01).workspace;
    std::fill(ws.error_spectrum.begin(), ws.error_spectrum.end(), Complex{});
    for (const auto& a : grad_wrt_h(ws)) for (const auto& v : a) CHECK(std::abs(v) == 0.0);
    for (const auto& m : grad_wrt_x(ws)) for (double v : m) CHECK(v == 0.0);
    for (const auto& m : grad_wrt_y(ws)) for (double v : m) CHECK(v == 0.0);
  }
  SUBCASE("spatial form 2 sum_n e[n] x[m+n] on 1x4 signals") {
    const Instance in{single(row({0.3, -1.2, 0.8, 2.0})), single(row({1.0, 0.5, -0.4, 0.2})),
                      row({0, 1, 0.2, 0.1}), row({0.1, 0.2, 1, 0.2})};
    const auto eval = forward_loss(in.x, in.y, in.g, in.g_hat, 0.01);
    const RealGrid a = spectral::idft2(grad_wrt_h(eval.workspace)[0]);
    const RealGrid& e = eval.workspace.error;
    for (int m = 0; m < 4; ++m) {
      double s = 0.0;
      for (int n = 0; n < 4; ++n) s += e[n] * in.x[0][(m + n) % 4];
      CHECK(a[m] == doctest::Approx(2.0 * s).epsilon(1e-12));
    }
  }
  SUBCASE("finite differences with respect to the filter coefficients") {
    // L(h) = || sum_l h^l (*) x^l - g ||^2 with h held as free variables.
    const Instance in = random_instance(1, 3, 4, rng);
    const auto eval = forward_loss(in.x, in.y, in.g, in.g_hat, 0.01);
    const RealGrid h = spectral::idft2(eval.workspace.filters[0]);
    const RealGrid a = spectral::idft2(grad_wrt_h(eval.workspace)[0]);
    auto loss_of = [&](const RealGrid& hh) {
      const RealGrid c = oracle::spatial_correlate(hh, in.x[0]);
      double s = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) s += (c[i] - in.g[i]) * (c[i] - in.g[i]);
      return s;
    };
    for (std::size_t i = 0; i < h.size(); ++i) {
      RealGrid hp = h;
      RealGrid hm = h;
      hp[i] += 1e-6;
      hm[i] -= 1e-6;
      const double fd = (loss_of(hp) - loss_of(hm)) / 2e-6;
      CHECK(relative_error(a[i], fd) < 1e-5);
    }
  }
}

TEST_CASE("grad_wrt_x") {
  std::mt19937_64 rng(24);
  SUBCASE("spatial form 2 sum_n e[n] h[m-n] on 1x4 signals") {
    const Instance in{single(row({0.3, -1.2, 0.8, 2.0})), single(row({1.0, 0.5, -0.4, 0.2})),
                      row({0, 1, 0.2, 0.1}), row({0.1, 0.2, 1, 0.2})};
    const auto eval = forward_loss(in.x, in.y, in.g, in.g_hat, 0.01);
    const RealGrid h = spectral::idft2(eval.workspace.filters[0]);
    const RealGrid gx = grad_wrt_x(eval.workspace)[0];
    for (int m = 0; m < 4; ++m) {
      double s = 0.0;
      for (int n = 0; n < 4; ++n) s += eval.workspace.error[n] * h[((m - n) % 4 + 4) % 4];
      CHECK(gx[m] == doctest::Approx(2.0 * s).epsilon(1e-12));
    }
  }
  SUBCASE("finite differences against the naive loss") {
    const Instance in = random_instance(2, 3, 4, rng);
    const auto eval = forward_loss(in.x, in.y, in.g, in.g_hat, 0.01);
    const FeatureStack gx = grad_wrt_x(eval.workspace);
    for (int l = 0; l < 2; ++l) {
      for (std::size_t i = 0; i < gx[l].size(); ++i) {
        CHECK(relative_error(gx[l][i], fd_naive(in, false, l, i, 0.01)) < 1e-5);
      }
    }
  }
}

TEST_CASE("grad_wrt_y") {
  std::mt19937_64 rng(25);
  SUBCASE("d = 1, 1x4 against the naive finite-difference oracle") {
    const Instance in = random_instance(1, 1, 4, rng);
    const auto eval = forward_loss(in.x, in.y, in.g, in.g_hat, 0.01);
    const FeatureStack gy = grad_wrt_y(eval.workspace);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(relative_error(gy[0][i], fd_naive(in, true, 0, i, 0.01)) < 1e-4);
    }
  }
  SUBCASE("d = 3, 8x8 per channel; real to 1e-9") {
    const Instance in = random_instance(3, 8, 8, rng);
    const auto eval = forward_loss(in.x, in.y, in.g, in.g_hat, 0.01);
    const FeatureStack gy = grad_wrt_y(eval.workspace);
    GradCheckOptions opts;
    opts.trials = 40;
    const auto report = grad_check(in.x, in.y, in.g, in.g_hat, 0.01, opts);
    CHECK(report.pass);
    CHECK(report.max_rel_err_y < 1e-4);
    for (int l = 0; l < 3; ++l) {
      for (std::size_t i = 0; i < 64; i += 9) {
        CHECK(relative_error(gy[l][i], fd_naive(in, true, l, i, 0.01)) < 1e-4);
      }
    }
    // residue of the spectra before the imaginary part is dropped
    for (int l = 0; l < 3; ++l) {
      const SpectralGrid spec = spectral::dft2(gy[l]);
      CHECK(spectral::imag_residue(spec) < 1e-9);
    }
  }
  SUBCASE("factorized, explicit-conjugate and time-reversal paths agree") {
    for (int d : {1, 2, 4}) {
      const Instance in = random_instance(d, 6, 5, rng);
      const auto ws = forward_loss(in.x, in.y, in.g, in.g_hat, 0.02).workspace;
      const FeatureStack fast = grad_wrt_y(ws);
      const FeatureStack conj_path = grad_wrt_y_explicit(ws, ReversalPath::Conjugate);
      const FeatureStack rev_path = grad_wrt_y_explicit(ws, ReversalPath::TimeReverse);
      for (int l = 0; l < d; ++l) {
        CHECK(max_abs_diff(fast[l], conj_path[l]) < 1e-10);
        CHECK(max_abs_diff(conj_path[l], rev_path[l]) < 1e-10);
      }
    }
  }
  SUBCASE("K1 vanishes off the diagonal") {
    const Instance in = random_instance(3, 4, 4, rng);
    const auto ws = forward_loss(in.x, in.y, in.g, in.g_hat, 0.02).workspace;
    for (int k = 0; k < 3; ++k) {
      for (int l = 0; l < 3; ++l) {
        const SpectralGrid k1 = ws.k1(k, l);
        double m = 0.0;
        for (const auto& v : k1) m = std::max(m, std::abs(v));
        if (k != l) CHECK(m == 0.0);
        else CHECK(m > 0.0);
      }
    }
    for (const auto& v : ws.denominator) {
      CHECK(v.real() >= 0.02);
      CHECK(std::abs(v.imag()) < 1e-8);
    }
    CHECK(spectral::is_conjugate_symmetric(ws.error_spectrum, 1e-8));
  }
}

TEST_CASE("grad_check over the configuration grid") {
  std::mt19937_64 rng(26);
  for (int d : {1, 2, 4}) {
    for (auto [h, w] : {std::pair{1, 8}, std::pair{8, 8}, std::pair{16, 16}}) {
      for (double lambda : {1e-3, 1e-2, 1e-1}) {
        const Instance in = random_instance(d, h, w, rng);
        GradCheckOptions opts;
        opts.seed = rng();
        const auto report = grad_check(in.x, in.y, in.g, in.g_hat, lambda, opts);
        INFO("d=", d, " size=", h, "x", w, " lambda=", lambda, " ", report.worst_coordinate);
        CHECK(report.pass);
      }
    }
  }
}

TEST_CASE("grad_check detects a mutated gradient and rejects bad steps") {
  std::mt19937_64 rng(27);
  const Instance in = random_instance(2, 6, 6, rng);
  GradCheckOptions opts;
  opts.analytic_scale = 1.01;
  CHECK_FALSE(grad_check(in.x, in.y, in.g, in.g_hat, 0.01, opts).pass);
  opts.analytic_scale = 1.0;
  opts.step = 0.0;
  CHECK_THROWS_AS(grad_check(in.x, in.y, in.g, in.g_hat, 0.01, opts), InvalidStep);
}

TEST_CASE("layer transfer experiment") {
  std::mt19937_64 rng(28);
  const int n = 8;
  const SpectralGrid x1 = spectral::dft2(oracle::random_grid(n, n, rng));
  const SpectralGrid x2 = spectral::dft2(oracle::random_grid(n, n, rng));
  const SpectralGrid noise1 = spectral::dft2(oracle::random_grid(n, n, rng, 0.1));
  const SpectralGrid noise2 = spectral::dft2(oracle::random_grid(n, n, rng, 0.1));
  const SpectralGrid g_hat = spectral::dft2(corrfilter::make_centered_response(n, n).grid);
  const SpectralGrid zero(n, n);

  SUBCASE("noiseless and unregularized is exactly zero") {
    const auto r = layer_transfer_experiment(x1, x2, zero, zero, g_hat, 0.0);
    CHECK(r.norm_single == 0.0);
    CHECK(r.norm_multi == 0.0);
  }
  SUBCASE("noiseless with gamma > 0 shrinks G") {
    const double gamma = 0.7;
    const auto r = layer_transfer_experiment(x1, x2, zero, zero, g_hat, gamma);
    for (std::size_t i = 0; i < g_hat.size(); ++i) {
      const Complex x = x1[i] + x2[i];
      const Complex expected = -gamma * g_hat[i] / (std::norm(x) + gamma);
      CHECK(std::abs(r.e_single[i] - expected) < 1e-12);
    }
  }
  SUBCASE("matches the unreduced H* Z - G form") {
    const double gamma = 0.05;
    const auto r = layer_transfer_experiment(x1, x2, noise1, noise2, g_hat, gamma);
    for (std::size_t i = 0; i < g_hat.size(); ++i) {
      const Complex x = x1[i] + x2[i];
      const Complex h = x * std::conj(g_hat[i]) / (std::norm(x) + gamma);
      const Complex z = x + noise1[i] + noise2[i];
      CHECK(std::abs(r.e_single[i] - (std::conj(h) * z - g_hat[i])) < 1e-10);
      const double den = std::norm(x1[i]) + std::norm(x2[i]) + gamma;
      const Complex h1 = x1[i] * std::conj(g_hat[i]) / den;
      const Complex h2 = x2[i] * std::conj(g_hat[i]) / den;
      const Complex multi = std::conj(h1) * (x1[i] + noise1[i]) +
                            std::conj(h2) * (x2[i] + noise2[i]) - g_hat[i];
      CHECK(std::abs(r.e_multi[i] - multi) < 1e-10);
    }
  }
  SUBCASE("norms grow with the noise scale") {
    double prev_single = 0.0;
    double prev_multi = 0.0;
    for (double t : {0.5, 1.0, 2.0}) {
      SpectralGrid m1 = noise1;
      SpectralGrid m2 = noise2;
      for (auto& v : m1) v *= t;
      for (auto& v : m2) v *= t;
      const auto r = layer_transfer_experiment(x1, x2, m1, m2, g_hat, 0.0);
      CHECK(r.norm_single > prev_single);
      CHECK(r.norm_multi > prev_multi);
      prev_single = r.norm_single;
      prev_multi = r.norm_multi;
    }
  }
  CHECK_THROWS_AS(layer_transfer_experiment(x1, SpectralGrid(n, n + 1), zero, zero, g_hat, 0.0),
                  DimensionMismatch);
}

TEST_CASE("grad_wrt_y cost grows linearly with the channel count") {
  std::mt19937_64 rng(29);
  double sink = 0.0;
  auto time_for = [&](int d) {
    const Instance in = random_instance(d, 32, 32, rng);
    const auto ws = forward_loss(in.x, in.y, in.g, in.g_hat, 0.01).workspace;
    const int reps = std::max(10, 400 / d);
    double best = 1e300;
    for (int round = 0; round < 5; ++round) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int r = 0; r < reps; ++r) {
        const FeatureStack g = grad_wrt_y(ws);
        sink += g[0][0];
      }
      best = std::min(
          best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best / reps;
  };
  const double base = time_for(1);
  for (int d : {8, 32}) {
    const double ratio = time_for(d) / base;
    INFO("d=", d, " ratio=", ratio);
    CHECK(ratio > 0.5 * d);
    CHECK(ratio < 2.0 * d);
  }
  CHECK(sink != 0.5);
}
