#pragma once

#include <cstdint>
#include <string>

#include "cfcf/corrfilter.hpp"
#include "cfcf/grid.hpp"

namespace cfcf::cfloss {

/// Everything the backward pass needs from a forward evaluation of the
/// correlation-filter loss
///   L = || sum_l h^l (*) x^l - g ||^2,  h = closed-form filter of (y, g_hat).
struct GradientWorkspace {
  double lambda = 0.0;
  RealGrid g;                 // shifted desired response of the test patch
  RealGrid error;             // e = response - g
  SpectralGrid error_spectrum;
  SpectralGrid g_hat_spectrum;  // DFT of the centered template response
  SpectralStack x_spectra;
  SpectralStack y_spectra;
  SpectralStack filters;      // H^k
  SpectralGrid denominator;   // D(Y) = sum_m |Y^m|^2 + lambda (real)

  int channels() const noexcept { return static_cast<int>(filters.size()); }

  /// Intermediate spectra of the filter Jacobian, evaluated on demand:
  ///   K1 = [k == l] conj(G)/D,  K2 = conj(G) Y^k conj(Y^l)/D^2,
  ///   K3 = conj(G) Y^k Y^l / D^2.
  SpectralGrid k1(int k, int l) const;
  SpectralGrid k2(int k, int l) const;
  SpectralGrid k3(int k, int l) const;
};

struct LossEvaluation {
  double loss = 0.0;
  RealGrid response;
  GradientWorkspace workspace;
};

/// Requires lambda > 0 (NonPositiveLambda otherwise).
LossEvaluation forward_loss(const FeatureStack& x, const FeatureStack& y, const RealGrid& g,
                            const RealGrid& g_hat, double lambda);

/// Convenience form: g_hat is the centered Gaussian with g's sigma.
LossEvaluation forward_loss(const FeatureStack& x, const FeatureStack& y,
                            const corrfilter::DesiredResponse& g, double lambda);

/// A^k = DFT of dL/dh^k = 2 conj(E) . X^k.
SpectralStack grad_wrt_h(const GradientWorkspace& ws);

/// dL/dx^l = 2 F^-1{ E . H^l }.
FeatureStack grad_wrt_x(const GradientWorkspace& ws);

/// dL/dy^l through the closed-form filter. Linear in the channel count: the
/// sums over k of the K2/K3 terms factor into two shared spectra.
FeatureStack grad_wrt_y(const GradientWorkspace& ws);

/// How the term carrying the time-reversal operator is evaluated in the
/// explicit (quadratic in d) reference path.
enum class ReversalPath { Conjugate, TimeReverse };

/// Term-by-term sum over K1/K2/K3; O(d^2 P). Used to cross-check grad_wrt_y.
FeatureStack grad_wrt_y_explicit(const GradientWorkspace& ws,
                                 ReversalPath path = ReversalPath::Conjugate);

struct TripletLossResult {
  double loss = 0.0;
  RealGrid response;
  FeatureStack grad_x;
  FeatureStack grad_y;
};

TripletLossResult triplet_loss(const FeatureStack& x, const FeatureStack& y, const RealGrid& g,
                               const RealGrid& g_hat, double lambda);

// --- finite-difference verification ---------------------------------------

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

struct GradCheckOptions {
  double step = 1e-6;
  int trials = 25;
  double tolerance = 1e-4;
  std::uint64_t seed = 42;
  /// Multiplies the analytic gradient before comparison; anything but 1
  /// must make the check fail.
  double analytic_scale = 1.0;
};

struct GradCheckReport {
  double max_rel_err_x = 0.0;
  double max_rel_err_y = 0.0;
  int trials = 0;
  bool pass = false;
  std::string worst_coordinate;
};

/// Compares grad_wrt_x / grad_wrt_y against central differences of the loss
/// at `trials` random coordinates of each.
GradCheckReport grad_check(const FeatureStack& x, const FeatureStack& y, const RealGrid& g,
                           const RealGrid& g_hat, double lambda, const GradCheckOptions& opts);

std::string to_json(const GradCheckReport& report);

// --- correlation error transfer between layers ------------------------------

struct LayerTransferReport {
  SpectralGrid e_single;
  SpectralGrid e_multi;
  double norm_single = 0.0;
  double norm_multi = 0.0;
};

/// Exact correlation errors of a single map X = X1 + X2 and of the two-map
/// layer (X1, X2) when the test sample carries additive noise mu1, mu2:
///   E_single = conj(H) Z - G,  H = X conj(G) / (|X|^2 + gamma),
///   E_multi  = conj(H1) Z1 + conj(H2) Z2 - G.
/// Both are evaluated in the algebraically reduced form
///   G (conj(X) mu - gamma) / (|X|^2 + gamma)
/// so the noiseless, unregularized case is exactly zero.
LayerTransferReport layer_transfer_experiment(const SpectralGrid& x1, const SpectralGrid& x2,
                                              const SpectralGrid& mu1, const SpectralGrid& mu2,
                                              const SpectralGrid& g_hat, double gamma);

/// Seeded inputs of one sweep: X1, X2 and unit noises mu1, mu2 are DFTs of
/// standard normal real maps, g_hat the DFT of the centred response.
struct LayerTransferInputs {
  SpectralGrid x1;
  SpectralGrid x2;
  SpectralGrid mu1;
  SpectralGrid mu2;
  SpectralGrid g_hat;
};

LayerTransferInputs random_layer_transfer_inputs(int size, std::uint64_t seed);

}  // namespace cfcf::cfloss
