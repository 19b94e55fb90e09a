#pragma once

#include "cfcf/grid.hpp"

namespace cfcf::corrfilter {

inline constexpr double kDefaultLambda = 0.01;
inline constexpr double kDefaultSigmaFactor = 1.0 / 16.0;

/// Gaussian target map with a unit peak. Distances are circular so the map
/// stays consistent with the periodic model the DFT imposes.
struct DesiredResponse {
  RealGrid grid;
  int peak_row = 0;
  int peak_col = 0;
  double sigma = 1.0;
};

DesiredResponse make_desired_response(int height, int width, int peak_row, int peak_col,
                                      double sigma);

/// Centered response ((H/2, W/2) with integer division) using the default
/// sigma of sqrt(H*W)/16.
DesiredResponse make_centered_response(int height, int width);

double default_sigma(int height, int width);

struct Peak {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Row-major first occurrence of the maximum.
Peak argmax(const RealGrid& grid);

/// Closed-form multi-channel filter
///   H^l = (Y^l . conj(G)) / (sum_k Y^k . conj(Y^k) + lambda).
/// lambda == 0 is accepted only when every bin of the energy spectrum is
/// non-zero, otherwise DivisionByZero.
SpectralStack solve_filter(const FeatureStack& y, const RealGrid& g, double lambda);
inline SpectralStack solve_filter(const FeatureStack& y, const DesiredResponse& g,
                                  double lambda) {
  return solve_filter(y, g.grid, lambda);
}

/// Summed response F^-1{ sum_l conj(H^l) . Z^l }.
RealGrid apply_filter(const SpectralStack& h, const FeatureStack& z);

/// Sum_k Y^k . conj(Y^k) as a complex grid with zero imaginary part.
SpectralGrid energy_spectrum(const SpectralStack& y);

/// Running numerator/denominator of the filter.
struct CorrelationModel {
  SpectralStack numerators;  // A_t^l
  SpectralGrid denominator;  // B_t
  double lambda = kDefaultLambda;
  double update_rate = 0.025;

  int channels() const noexcept { return static_cast<int>(numerators.size()); }
  int height() const noexcept { return denominator.height(); }
  int width() const noexcept { return denominator.width(); }
};

CorrelationModel init_model(const FeatureStack& y, const RealGrid& g, double lambda,
                            double update_rate);
CorrelationModel update_model(const CorrelationModel& m, const FeatureStack& y,
                              const RealGrid& g);

struct Detection {
  RealGrid response;
  Peak peak;
};

/// c = F^-1{ (sum_l conj(A^l) . Z^l) / (B + lambda) } and its argmax.
Detection detect(const CorrelationModel& m, const FeatureStack& z);

// --- 1-D scale filter -------------------------------------------------------

struct ScaleConfig {
  int num_scales = 17;
  double scale_step = 1.02;
  double lambda = kDefaultLambda;
  double update_rate = 0.025;
  /// Gaussian width along the scale axis is sqrt(S) * sigma_factor.
  double sigma_factor = 0.25;
};

/// Scale samples: one row per feature dimension, one column per scale.
using ScaleSamples = RealGrid;

struct ScaleModel {
  ScaleConfig config;
  int feature_dim = 0;
  CorrelationModel filter;
  RealGrid desired;  // 1 x S Gaussian peaked at the center index

  int center_index() const noexcept { return config.num_scales / 2; }
};

ScaleModel init_scale_model(const ScaleSamples& samples, const ScaleConfig& config);
ScaleModel update_scale_model(const ScaleModel& sm, const ScaleSamples& samples);

/// Index of the best scale; exact ties resolve to the index closest to the
/// center (then the lower index).
int scale_detect(const ScaleModel& sm, const ScaleSamples& samples);

/// Per-scale response (length S) used by scale_detect.
RealGrid scale_response(const ScaleModel& sm, const ScaleSamples& samples);

}  // namespace cfcf::corrfilter
