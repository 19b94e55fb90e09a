#include "cfcf/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace cfcf::spectral {
namespace {

// FFTW planning is not thread-safe; execution of an existing plan on new
// arrays is. Plans are created once per (height, width, direction) and kept
// for the lifetime of the process.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int height, int width, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(height, width, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const auto n = static_cast<std::size_t>(height) * width;
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    fftw_plan plan =
        fftw_plan_dft_2d(height, width, in, out, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

void execute(const SpectralGrid& in, SpectralGrid& out, int sign) {
  fftw_plan plan = PlanCache::instance().get(in.height(), in.width(), sign);
  // fftw_execute_dft does not modify the input of an out-of-place plan.
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data()));
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  fftw_execute_dft(plan, src, dst);
}

}  // namespace

SpectralGrid dft2(const SpectralGrid& g) {
  SpectralGrid out(g.height(), g.width());
  execute(g, out, FFTW_FORWARD);
  return out;
}

SpectralGrid dft2(const RealGrid& g) {
  SpectralGrid in(g.height(), g.width());
  std::copy(g.begin(), g.end(), in.begin());
  return dft2(in);
}

SpectralStack dft2(const FeatureStack& stack) {
  SpectralStack out;
  out.reserve(stack.channels());
  for (const auto& map : stack) out.push_back(dft2(map));
  return out;
}

SpectralGrid idft2_complex(const SpectralGrid& s) {
  SpectralGrid out(s.height(), s.width());
  execute(s, out, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(s.size());
  for (auto& v : out) v *= scale;
  return out;
}

namespace {

double residue_of(const SpectralGrid& spatial) {
  double max_real = 0.0;
  double max_imag = 0.0;
  for (const auto& v : spatial) {
    max_real = std::max(max_real, std::abs(v.real()));
    max_imag = std::max(max_imag, std::abs(v.imag()));
  }
  return max_imag / (1.0 + max_real);
}

}  // namespace

double imag_residue(const SpectralGrid& s) { return residue_of(idft2_complex(s)); }

RealGrid idft2(const SpectralGrid& s) {
  const SpectralGrid spatial = idft2_complex(s);
  const double residue = residue_of(spatial);
  if (!(residue < kImagResidueTolerance)) {
    throw SymmetryViolation("inverse DFT has relative imaginary residue " +
                            std::to_string(residue));
  }
  RealGrid out(s.height(), s.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = spatial[i].real();
  return out;
}

RealGrid circ_correlate(const RealGrid& a, const RealGrid& b) {
  require_same_shape(a, b, "circ_correlate");
  SpectralGrid fa = dft2(a);
  const SpectralGrid fb = dft2(b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] = std::conj(fa[i]) * fb[i];
  return idft2(fa);
}

SpectralGrid time_reverse(const SpectralGrid& s) {
  const int h = s.height();
  const int w = s.width();
  SpectralGrid out(h, w);
  for (int u = 0; u < h; ++u) {
    const int ru = (h - u) % h;
    for (int v = 0; v < w; ++v) out(u, v) = s(ru, (w - v) % w);
  }
  return out;
}

bool is_conjugate_symmetric(const SpectralGrid& s, double tol) {
  const int h = s.height();
  const int w = s.width();
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      if (std::abs(s(u, v) - std::conj(s((h - u) % h, (w - v) % w))) > tol) return false;
    }
  }
  return true;
}

SpectralGrid conj(const SpectralGrid& s) {
  SpectralGrid out = s;
  for (auto& v : out) v = std::conj(v);
  return out;
}

}  // namespace cfcf::spectral
