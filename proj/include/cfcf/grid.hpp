#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "cfcf/errors.hpp"

namespace cfcf {

using Complex = std::complex<double>;

/// Dense row-major 2-D array. Spatial signals use Grid<double>, their DFTs
/// Grid<Complex>.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{}) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
      throw InvalidArgument("grid dimensions must be positive");
    }
    values_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(int row, int col) { return values_[static_cast<std::size_t>(row) * width_ + col]; }
  const T& operator()(int row, int col) const {
    return values_[static_cast<std::size_t>(row) * width_ + col];
  }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::vector<T>& values() noexcept { return values_; }
  const std::vector<T>& values() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  bool operator==(const Grid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> values_;
};

using RealGrid = Grid<double>;
using SpectralGrid = Grid<Complex>;
using SpectralStack = std::vector<SpectralGrid>;

template <typename T, typename U>
void require_same_shape(const Grid<T>& a, const Grid<U>& b, const char* where) {
  if (!a.same_shape(b)) {
    throw DimensionMismatch(std::string(where) + ": grid shapes differ (" +
                            std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
                            std::to_string(b.height()) + "x" + std::to_string(b.width()) + ")");
  }
}

/// d feature maps of identical size.
class FeatureStack {
 public:
  FeatureStack() = default;
  FeatureStack(int channels, int height, int width)
      : maps_(static_cast<std::size_t>(channels), RealGrid(height, width)) {
    if (channels < 1) throw InvalidArgument("feature stack needs at least one channel");
  }
  explicit FeatureStack(std::vector<RealGrid> maps) : maps_(std::move(maps)) {
    if (maps_.empty()) throw InvalidArgument("feature stack needs at least one channel");
    for (const auto& m : maps_) require_same_shape(m, maps_.front(), "FeatureStack");
  }

  int channels() const noexcept { return static_cast<int>(maps_.size()); }
  int height() const noexcept { return maps_.empty() ? 0 : maps_.front().height(); }
  int width() const noexcept { return maps_.empty() ? 0 : maps_.front().width(); }

  const RealGrid& front() const { return maps_.front(); }
  RealGrid& operator[](std::size_t l) { return maps_[l]; }
  const RealGrid& operator[](std::size_t l) const { return maps_[l]; }
  std::vector<RealGrid>& maps() noexcept { return maps_; }
  const std::vector<RealGrid>& maps() const noexcept { return maps_; }

  auto begin() noexcept { return maps_.begin(); }
  auto end() noexcept { return maps_.end(); }
  auto begin() const noexcept { return maps_.begin(); }
  auto end() const noexcept { return maps_.end(); }

  void push_back(RealGrid map) {
    if (!maps_.empty()) require_same_shape(map, maps_.front(), "FeatureStack::push_back");
    maps_.push_back(std::move(map));
  }

  bool operator==(const FeatureStack&) const = default;

 private:
  std::vector<RealGrid> maps_;
};

}  // namespace cfcf
