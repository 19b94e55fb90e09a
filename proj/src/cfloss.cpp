#include "cfcf/cfloss.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cfcf/spectral.hpp"

namespace cfcf::cfloss {
namespace {

void check_inputs(const FeatureStack& x, const FeatureStack& y, const RealGrid& g,
                  const RealGrid& g_hat, double lambda) {
  if (x.channels() != y.channels()) {
    throw DimensionMismatch("test and template stacks differ in channel count");
  }
  require_same_shape(x.front(), y.front(), "forward_loss");
  require_same_shape(x.front(), g, "forward_loss");
  require_same_shape(x.front(), g_hat, "forward_loss");
  if (!(lambda > 0.0)) throw NonPositiveLambda("lambda must be strictly positive");
}

FeatureStack inverse_stack(const SpectralStack& spectra) {
  std::vector<RealGrid> maps;
  maps.reserve(spectra.size());
  for (const auto& s : spectra) maps.push_back(spectral::idft2(s));
  return FeatureStack(std::move(maps));
}

}  // namespace

SpectralGrid GradientWorkspace::k1(int k, int l) const {
  SpectralGrid out(denominator.height(), denominator.width());
  if (k != l) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::conj(g_hat_spectrum[i]) / denominator[i].real();
  }
  return out;
}

SpectralGrid GradientWorkspace::k2(int k, int l) const {
  SpectralGrid out(denominator.height(), denominator.width());
  const auto& yk = y_spectra[k];
  const auto& yl = y_spectra[l];
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = denominator[i].real();
    out[i] = std::conj(g_hat_spectrum[i]) * yk[i] * std::conj(yl[i]) / (d * d);
  }
  return out;
}

SpectralGrid GradientWorkspace::k3(int k, int l) const {
  SpectralGrid out(denominator.height(), denominator.width());
  const auto& yk = y_spectra[k];
  const auto& yl = y_spectra[l];
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = denominator[i].real();
    out[i] = std::conj(g_hat_spectrum[i]) * yk[i] * yl[i] / (d * d);
  }
  return out;
}

LossEvaluation forward_loss(const FeatureStack& x, const FeatureStack& y, const RealGrid& g,
                            const RealGrid& g_hat, double lambda) {
  check_inputs(x, y, g, g_hat, lambda);

  LossEvaluation out;
  GradientWorkspace& ws = out.workspace;
  ws.lambda = lambda;
  ws.g = g;
  ws.x_spectra = spectral::dft2(x);
  ws.y_spectra = spectral::dft2(y);
  ws.g_hat_spectrum = spectral::dft2(g_hat);
  ws.denominator = corrfilter::energy_spectrum(ws.y_spectra);
  for (auto& v : ws.denominator) v = Complex(v.real() + lambda, 0.0);

  const int d = x.channels();
  ws.filters.reserve(d);
  SpectralGrid response_spectrum(x.height(), x.width());
  for (int l = 0; l < d; ++l) {
    const auto& yl = ws.y_spectra[l];
    const auto& xl = ws.x_spectra[l];
    SpectralGrid hl(yl.height(), yl.width());
    for (std::size_t i = 0; i < hl.size(); ++i) {
      hl[i] = yl[i] * std::conj(ws.g_hat_spectrum[i]) / ws.denominator[i].real();
      response_spectrum[i] += std::conj(hl[i]) * xl[i];
    }
    ws.filters.push_back(std::move(hl));
  }

  out.response = spectral::idft2(response_spectrum);
  ws.error = out.response;
  double loss = 0.0;
  for (std::size_t i = 0; i < ws.error.size(); ++i) {
    ws.error[i] -= g[i];
    loss += ws.error[i] * ws.error[i];
  }
  ws.error_spectrum = spectral::dft2(ws.error);
  out.loss = loss;
  return out;
}

LossEvaluation forward_loss(const FeatureStack& x, const FeatureStack& y,
                            const corrfilter::DesiredResponse& g, double lambda) {
  const auto g_hat = corrfilter::make_desired_response(g.grid.height(), g.grid.width(),
                                                       g.grid.height() / 2,
                                                       g.grid.width() / 2, g.sigma);
  return forward_loss(x, y, g.grid, g_hat.grid, lambda);
}

SpectralStack grad_wrt_h(const GradientWorkspace& ws) {
  SpectralStack a;
  a.reserve(ws.channels());
  for (const auto& xk : ws.x_spectra) {
    SpectralGrid ak(xk.height(), xk.width());
    for (std::size_t i = 0; i < ak.size(); ++i) {
      ak[i] = 2.0 * std::conj(ws.error_spectrum[i]) * xk[i];
    }
    a.push_back(std::move(ak));
  }
  return a;
}

FeatureStack grad_wrt_x(const GradientWorkspace& ws) {
  SpectralStack out;
  out.reserve(ws.channels());
  for (const auto& hl : ws.filters) {
    SpectralGrid s(hl.height(), hl.width());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = 2.0 * ws.error_spectrum[i] * hl[i];
    out.push_back(std::move(s));
  }
  return inverse_stack(out);
}

FeatureStack grad_wrt_y(const GradientWorkspace& ws) {
  const SpectralStack a = grad_wrt_h(ws);
  const int d = ws.channels();
  const std::size_t n = ws.denominator.size();

  // sum_k conj(K2^{kl}) A^k + K3^{kl} conj(A^k) = 2 Re(G S) Y^l / D^2 with
  // S = sum_k conj(Y^k) A^k.
  std::vector<double> coupling(n);
  {
    std::vector<Complex> s(n);
    for (int k = 0; k < d; ++k) {
      const auto& yk = ws.y_spectra[k];
      const auto& ak = a[k];
      for (std::size_t i = 0; i < n; ++i) s[i] += std::conj(yk[i]) * ak[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double den = ws.denominator[i].real();
      coupling[i] = 2.0 * (ws.g_hat_spectrum[i] * s[i]).real() / (den * den);
    }
  }

  SpectralStack out;
  out.reserve(d);
  for (int l = 0; l < d; ++l) {
    const auto& yl = ws.y_spectra[l];
    const auto& al = a[l];
    SpectralGrid gl(yl.height(), yl.width());
    for (std::size_t i = 0; i < n; ++i) {
      gl[i] = ws.g_hat_spectrum[i] * al[i] / ws.denominator[i].real() - coupling[i] * yl[i];
    }
    out.push_back(std::move(gl));
  }
  return inverse_stack(out);
}

FeatureStack grad_wrt_y_explicit(const GradientWorkspace& ws, ReversalPath path) {
  const SpectralStack a = grad_wrt_h(ws);
  const int d = ws.channels();
  SpectralStack out;
  out.reserve(d);
  for (int l = 0; l < d; ++l) {
    SpectralGrid gl(ws.denominator.height(), ws.denominator.width());
    if (path == ReversalPath::Conjugate) {
      // sum_k conj(K1 - K2) . A^k - K3 . conj(A^k)
      for (int k = 0; k < d; ++k) {
        const SpectralGrid k1 = ws.k1(k, l);
        const SpectralGrid k2 = ws.k2(k, l);
        const SpectralGrid k3 = ws.k3(k, l);
        const auto& ak = a[k];
        for (std::size_t i = 0; i < gl.size(); ++i) {
          gl[i] += std::conj(k1[i] - k2[i]) * ak[i] - k3[i] * std::conj(ak[i]);
        }
      }
    } else {
      // Un-conjugated form: sum_k M(conj(A^k) (K1 - K2)) - conj(A^k) K3, with
      // M the circular time reversal.
      SpectralGrid reversed_part(gl.height(), gl.width());
      for (int k = 0; k < d; ++k) {
        const SpectralGrid k1 = ws.k1(k, l);
        const SpectralGrid k2 = ws.k2(k, l);
        const SpectralGrid k3 = ws.k3(k, l);
        const auto& ak = a[k];
        for (std::size_t i = 0; i < gl.size(); ++i) {
          reversed_part[i] += std::conj(ak[i]) * (k1[i] - k2[i]);
          gl[i] -= std::conj(ak[i]) * k3[i];
        }
      }
      const SpectralGrid m = spectral::time_reverse(reversed_part);
      for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += m[i];
    }
    out.push_back(std::move(gl));
  }
  return inverse_stack(out);
}

TripletLossResult triplet_loss(const FeatureStack& x, const FeatureStack& y, const RealGrid& g,
                               const RealGrid& g_hat, double lambda) {
  LossEvaluation eval = forward_loss(x, y, g, g_hat, lambda);
  TripletLossResult out;
  out.loss = eval.loss;
  out.grad_x = grad_wrt_x(eval.workspace);
  out.grad_y = grad_wrt_y(eval.workspace);
  out.response = std::move(eval.response);
  return out;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const FeatureStack& x, const FeatureStack& y, const RealGrid& g,
                           const RealGrid& g_hat, double lambda, const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw InvalidStep("finite-difference step must be positive");
  if (opts.trials < 1) throw InvalidArgument("grad_check needs at least one trial");

  const TripletLossResult analytic = triplet_loss(x, y, g, g_hat, lambda);
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<int> pick_channel(0, x.channels() - 1);
  std::uniform_int_distribution<std::size_t> pick_index(0, x.front().size() - 1);

  GradCheckReport report;
  report.trials = opts.trials;
  double worst = -1.0;

  auto probe = [&](bool on_template, double& max_err) {
    const int l = pick_channel(rng);
    const std::size_t i = pick_index(rng);
    FeatureStack xp = x;
    FeatureStack yp = y;
    double& coord = on_template ? yp[l][i] : xp[l][i];
    const double base = coord;
    coord = base + opts.step;
    const double plus = forward_loss(xp, yp, g, g_hat, lambda).loss;
    coord = base - opts.step;
    const double minus = forward_loss(xp, yp, g, g_hat, lambda).loss;
    const double numeric = (plus - minus) / (2.0 * opts.step);
    const double value =
        opts.analytic_scale * (on_template ? analytic.grad_y[l][i] : analytic.grad_x[l][i]);
    const double err = relative_error(value, numeric);
    max_err = std::max(max_err, err);
    if (err > worst) {
      worst = err;
      std::ostringstream os;
      os << (on_template ? "y" : "x") << "[channel " << l << ", row "
         << i / x.width() << ", col " << i % x.width() << "] analytic=" << value
         << " numeric=" << numeric << " rel_err=" << err;
      report.worst_coordinate = os.str();
    }
  };

  for (int t = 0; t < opts.trials; ++t) {
    probe(false, report.max_rel_err_x);
    probe(true, report.max_rel_err_y);
  }
  report.pass = report.max_rel_err_x < opts.tolerance && report.max_rel_err_y < opts.tolerance;
  return report;
}

std::string to_json(const GradCheckReport& report) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["max_rel_err_x"] = report.max_rel_err_x;
  j["max_rel_err_y"] = report.max_rel_err_y;
  j["trials"] = report.trials;
  j["pass"] = report.pass;
  j["worst_coordinate"] = report.worst_coordinate;
  return j.dump(2);
}

LayerTransferReport layer_transfer_experiment(const SpectralGrid& x1, const SpectralGrid& x2,
                                              const SpectralGrid& mu1, const SpectralGrid& mu2,
                                              const SpectralGrid& g_hat, double gamma) {
  require_same_shape(x1, x2, "layer_transfer_experiment");
  require_same_shape(x1, mu1, "layer_transfer_experiment");
  require_same_shape(x1, mu2, "layer_transfer_experiment");
  require_same_shape(x1, g_hat, "layer_transfer_experiment");
  if (gamma < 0.0) throw InvalidArgument("gamma must be non-negative");

  LayerTransferReport out{SpectralGrid(x1.height(), x1.width()),
                          SpectralGrid(x1.height(), x1.width()), 0.0, 0.0};
  for (std::size_t i = 0; i < x1.size(); ++i) {
    const Complex x = x1[i] + x2[i];
    const Complex mu = mu1[i] + mu2[i];
    const double single_den = std::norm(x) + gamma;
    const double multi_den = std::norm(x1[i]) + std::norm(x2[i]) + gamma;
    out.e_single[i] =
        single_den == 0.0 ? Complex{} : g_hat[i] * (std::conj(x) * mu - gamma) / single_den;
    out.e_multi[i] =
        multi_den == 0.0
            ? Complex{}
            : g_hat[i] * (std::conj(x1[i]) * mu1[i] + std::conj(x2[i]) * mu2[i] - gamma) /
                  multi_den;
    out.norm_single += std::norm(out.e_single[i]);
    out.norm_multi += std::norm(out.e_multi[i]);
  }
  out.norm_single = std::sqrt(out.norm_single);
  out.norm_multi = std::sqrt(out.norm_multi);
  return out;
}

LayerTransferInputs random_layer_transfer_inputs(int size, std::uint64_t seed) {
  if (size < 1) throw InvalidArgument("size must be positive");
  std::mt19937_64 rng(seed);
  auto noise = [&] {
    std::normal_distribution<double> n01(0.0, 1.0);
    RealGrid g(size, size);
    for (auto& v : g) v = n01(rng);
    return spectral::dft2(g);
  };
  LayerTransferInputs in;
  in.x1 = noise();
  in.x2 = noise();
  in.mu1 = noise();
  in.mu2 = noise();
  in.g_hat = spectral::dft2(corrfilter::make_centered_response(size, size).grid);
  return in;
}

}  // namespace cfcf::cfloss
