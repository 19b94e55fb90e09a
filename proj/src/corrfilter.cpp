#include "cfcf/corrfilter.hpp"

#include <algorithm>
#include <cmath>

#include "cfcf/spectral.hpp"

namespace cfcf::corrfilter {
namespace {

int circular_distance(int a, int b, int n) {
  const int d = std::abs(a - b) % n;
  return std::min(d, n - d);
}

void require_stack_matches(const SpectralStack& h, const FeatureStack& z, const char* where) {
  if (h.empty() || static_cast<int>(h.size()) != z.channels()) {
    throw DimensionMismatch(std::string(where) + ": channel count differs");
  }
  require_same_shape(h.front(), z.front(), where);
}

// Energy-spectrum bins below this fraction of the largest bin count as zero
// when no regularization is supplied.
constexpr double kZeroBinTolerance = 1e-12;

// Features as d rows of a 1 x S signal.
FeatureStack rows_as_stack(const ScaleSamples& samples) {
  std::vector<RealGrid> maps;
  maps.reserve(samples.height());
  for (int r = 0; r < samples.height(); ++r) {
    RealGrid row(1, samples.width());
    for (int c = 0; c < samples.width(); ++c) row(0, c) = samples(r, c);
    maps.push_back(std::move(row));
  }
  return FeatureStack(std::move(maps));
}

}  // namespace

double default_sigma(int height, int width) {
  return kDefaultSigmaFactor * std::sqrt(static_cast<double>(height) * width);
}

DesiredResponse make_desired_response(int height, int width, int peak_row, int peak_col,
                                      double sigma) {
  if (!(sigma > 0.0)) throw InvalidSigma("sigma must be positive, got " + std::to_string(sigma));
  if (peak_row < 0 || peak_row >= height || peak_col < 0 || peak_col >= width) {
    throw InvalidArgument("desired response peak outside the grid");
  }
  DesiredResponse out{RealGrid(height, width), peak_row, peak_col, sigma};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int r = 0; r < height; ++r) {
    const double dr = circular_distance(r, peak_row, height);
    for (int c = 0; c < width; ++c) {
      const double dc = circular_distance(c, peak_col, width);
      out.grid(r, c) = std::exp(-(dr * dr + dc * dc) * inv);
    }
  }
  return out;
}

DesiredResponse make_centered_response(int height, int width) {
  return make_desired_response(height, width, height / 2, width / 2,
                               default_sigma(height, width));
}

Peak argmax(const RealGrid& grid) {
  Peak best{0, 0, grid(0, 0)};
  for (int r = 0; r < grid.height(); ++r) {
    for (int c = 0; c < grid.width(); ++c) {
      if (grid(r, c) > best.value) best = {r, c, grid(r, c)};
    }
  }
  return best;
}

SpectralGrid energy_spectrum(const SpectralStack& y) {
  SpectralGrid d(y.front().height(), y.front().width());
  for (const auto& yk : y) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += std::norm(yk[i]);
  }
  return d;
}

SpectralStack solve_filter(const FeatureStack& y, const RealGrid& g, double lambda) {
  require_same_shape(y.front(), g, "solve_filter");
  if (lambda < 0.0) throw NonPositiveLambda("lambda must be non-negative");
  const SpectralStack ys = spectral::dft2(y);
  const SpectralGrid gs = spectral::dft2(g);
  const SpectralGrid energy = energy_spectrum(ys);

  if (lambda == 0.0) {
    double largest = 0.0;
    for (const auto& v : energy) largest = std::max(largest, v.real());
    for (const auto& v : energy) {
      if (v.real() <= kZeroBinTolerance * std::max(1.0, largest)) {
        throw DivisionByZero("zero-energy frequency bin with lambda = 0");
      }
    }
  }

  SpectralStack h;
  h.reserve(ys.size());
  for (const auto& yl : ys) {
    SpectralGrid hl(yl.height(), yl.width());
    for (std::size_t i = 0; i < hl.size(); ++i) {
      hl[i] = yl[i] * std::conj(gs[i]) / (energy[i].real() + lambda);
    }
    h.push_back(std::move(hl));
  }
  return h;
}

RealGrid apply_filter(const SpectralStack& h, const FeatureStack& z) {
  require_stack_matches(h, z, "apply_filter");
  SpectralGrid acc(z.height(), z.width());
  for (int l = 0; l < z.channels(); ++l) {
    const SpectralGrid zl = spectral::dft2(z[l]);
    const auto& hl = h[l];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::conj(hl[i]) * zl[i];
  }
  return spectral::idft2(acc);
}

CorrelationModel init_model(const FeatureStack& y, const RealGrid& g, double lambda,
                            double update_rate) {
  require_same_shape(y.front(), g, "init_model");
  if (lambda < 0.0) throw NonPositiveLambda("lambda must be non-negative");
  if (update_rate < 0.0 || update_rate > 1.0) {
    throw InvalidArgument("update rate must lie in [0, 1]");
  }
  const SpectralStack ys = spectral::dft2(y);
  const SpectralGrid gs = spectral::dft2(g);
  CorrelationModel m;
  m.lambda = lambda;
  m.update_rate = update_rate;
  m.denominator = energy_spectrum(ys);
  m.numerators.reserve(ys.size());
  for (const auto& yl : ys) {
    SpectralGrid a(yl.height(), yl.width());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::conj(gs[i]) * yl[i];
    m.numerators.push_back(std::move(a));
  }
  return m;
}

CorrelationModel update_model(const CorrelationModel& m, const FeatureStack& y,
                              const RealGrid& g) {
  if (y.channels() != m.channels()) throw DimensionMismatch("update_model: channel count differs");
  require_same_shape(m.denominator, y.front(), "update_model");
  const CorrelationModel fresh = init_model(y, g, m.lambda, m.update_rate);
  const double mu = m.update_rate;
  CorrelationModel out = m;
  for (int l = 0; l < out.channels(); ++l) {
    auto& a = out.numerators[l];
    const auto& a_new = fresh.numerators[l];
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1.0 - mu) * a[i] + mu * a_new[i];
  }
  for (std::size_t i = 0; i < out.denominator.size(); ++i) {
    out.denominator[i] = (1.0 - mu) * out.denominator[i] + mu * fresh.denominator[i];
  }
  return out;
}

Detection detect(const CorrelationModel& m, const FeatureStack& z) {
  require_stack_matches(m.numerators, z, "detect");
  SpectralGrid acc(z.height(), z.width());
  for (int l = 0; l < z.channels(); ++l) {
    const SpectralGrid zl = spectral::dft2(z[l]);
    const auto& al = m.numerators[l];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::conj(al[i]) * zl[i];
  }
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] /= (m.denominator[i] + m.lambda);
  Detection out{spectral::idft2(acc), {}};
  out.peak = argmax(out.response);
  return out;
}

// --- scale filter -----------------------------------------------------------

namespace {

RealGrid scale_gaussian(const ScaleConfig& config) {
  const int s = config.num_scales;
  const double sigma = std::sqrt(static_cast<double>(s)) * config.sigma_factor;
  return make_desired_response(1, s, 0, s / 2, sigma).grid;
}

void validate_scale_config(const ScaleConfig& config) {
  if (config.num_scales < 1 || config.num_scales % 2 == 0) {
    throw InvalidArgument("number of scales must be a positive odd integer");
  }
  if (!(config.scale_step > 1.0)) throw InvalidArgument("scale step must exceed 1");
}

}  // namespace

ScaleModel init_scale_model(const ScaleSamples& samples, const ScaleConfig& config) {
  validate_scale_config(config);
  if (samples.width() != config.num_scales) {
    throw DimensionMismatch("scale samples must have one column per scale");
  }
  ScaleModel sm;
  sm.config = config;
  sm.feature_dim = samples.height();
  sm.desired = scale_gaussian(config);
  sm.filter = init_model(rows_as_stack(samples), sm.desired, config.lambda, config.update_rate);
  return sm;
}

ScaleModel update_scale_model(const ScaleModel& sm, const ScaleSamples& samples) {
  if (samples.height() != sm.feature_dim || samples.width() != sm.config.num_scales) {
    throw DimensionMismatch("scale samples do not match the scale model");
  }
  ScaleModel out = sm;
  out.filter = update_model(sm.filter, rows_as_stack(samples), sm.desired);
  return out;
}

RealGrid scale_response(const ScaleModel& sm, const ScaleSamples& samples) {
  if (samples.height() != sm.feature_dim || samples.width() != sm.config.num_scales) {
    throw DimensionMismatch("scale samples do not match the scale model");
  }
  return detect(sm.filter, rows_as_stack(samples)).response;
}

int scale_detect(const ScaleModel& sm, const ScaleSamples& samples) {
  const RealGrid response = scale_response(sm, samples);
  const int center = sm.center_index();
  int best = center;
  for (int i = 0; i < response.width(); ++i) {
    const double v = response(0, i);
    const double b = response(0, best);
    if (v > b || (v == b && std::abs(i - center) < std::abs(best - center))) best = i;
  }
  return best;
}

}  // namespace cfcf::corrfilter
