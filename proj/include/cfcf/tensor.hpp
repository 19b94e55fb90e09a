#pragma once

#include <cstddef>
#include <vector>

#include "cfcf/grid.hpp"

namespace cfcf {

/// Channel-major (C x H x W) real tensor. Images are 3 x H x W with values in
/// [0, 1], RGB order.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const noexcept { return data.size(); }

  double& at(int c, int r, int col) {
    return data[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(r) * width + col];
  }
  double at(int c, int r, int col) const {
    return data[static_cast<std::size_t>(c) * plane() + static_cast<std::size_t>(r) * width + col];
  }

  double* channel_data(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
  const double* channel_data(int c) const {
    return data.data() + static_cast<std::size_t>(c) * plane();
  }

  bool same_shape(const Tensor& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool operator==(const Tensor&) const = default;
};

FeatureStack to_feature_stack(const Tensor& t);
Tensor from_feature_stack(const FeatureStack& s);

}  // namespace cfcf
