#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfcf/box.hpp"
#include "cfcf/dataset.hpp"
#include "cfcf/tensor.hpp"

namespace cfcf::synthetic {

/// Rendered frames with exact ground truth boxes.
struct SyntheticSequence {
  std::string name;
  std::vector<Tensor> frames;
  std::vector<Box> boxes;
};

/// Textured square moving with constant velocity over a static noise
/// background; every frame also gets fresh low-amplitude noise.
struct TranslateOptions {
  int frames = 60;
  int width = 320;
  int height = 240;
  int object = 40;
  double vx = 3.0;
  double vy = 0.0;
  double start_x = 60.0;  // top-left of the first box
  double start_y = 100.0;
  double frame_noise = 0.02;
  std::uint64_t seed = 1;
};

SyntheticSequence translating_square(const TranslateOptions& opts = {});

/// Textured square kept at the image centre while its side grows
/// geometrically from `object` to `object * final_scale`.
struct ZoomOptions {
  int frames = 40;
  int width = 240;
  int height = 240;
  int object = 40;
  double final_scale = 1.5;
  double frame_noise = 0.02;
  std::uint64_t seed = 2;
};

SyntheticSequence zoom_square(const ZoomOptions& opts = {});

dataset::Sequence to_sequence(const SyntheticSequence& seq);

/// Frames as 00000001.png, ... plus groundtruth.txt.
void write_sequence(const SyntheticSequence& seq, const std::filesystem::path& dir);

}  // namespace cfcf::synthetic
