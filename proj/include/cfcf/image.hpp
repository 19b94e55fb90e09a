#pragma once

#include <filesystem>

#include "cfcf/box.hpp"
#include "cfcf/tensor.hpp"

namespace cfcf::image {

inline constexpr int kPatchSize = 101;

/// Decodes any image OpenCV can read into a 3 x H x W RGB tensor in [0, 1].
/// Throws IoError when the file cannot be decoded.
Tensor read_image(const std::filesystem::path& path);

/// 8-bit RGB PNG with a fixed encoder profile (compression 6, default
/// strategy), so identical tensors give identical bytes.
void write_png(const std::filesystem::path& path, const Tensor& rgb);

/// Value at fractional index position (row, col) of one channel; positions
/// outside the image take the nearest edge value.
double sample_bilinear(const Tensor& img, int channel, double row, double col);

/// Resamples the axis-aligned region of size side_w x side_h centred on
/// (center_x, center_y) to out_w x out_h pixels. Coordinates are continuous:
/// pixel i covers [i, i + 1). Throws EmptyImage.
Tensor crop_resize(const Tensor& img, double center_x, double center_y, double side_w,
                   double side_h, int out_w, int out_h);

/// Side of the square training crop: 2 sqrt(w h).
double crop_side(const Box& box);

/// Square crop of side 2 sqrt(w h) centred on the box, resized to size x size.
/// Throws InvalidBox for non-positive w or h and EmptyImage for an empty image.
Tensor crop_square(const Tensor& img, const Box& box, int size = kPatchSize);

/// 0.299 R + 0.587 G + 0.114 B.
RealGrid luma(const Tensor& rgb);

/// Replicates a gray map into three identical channels.
Tensor gray_to_rgb(const RealGrid& gray);

}  // namespace cfcf::image
