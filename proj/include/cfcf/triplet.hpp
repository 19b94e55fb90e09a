#pragma once

#include <string>

#include "cfcf/corrfilter.hpp"
#include "cfcf/tensor.hpp"

namespace cfcf {

/// One training sample of the feature-learning loss: template patch y with the
/// object centered, test patch x with the object displaced by (shift_dx,
/// shift_dy) patch pixels, and the desired response g peaked at
/// center + (shift_dy, shift_dx).
struct Triplet {
  Tensor x_patch;
  Tensor y_patch;
  int shift_dx = 0;
  int shift_dy = 0;
  int frame_gap = 0;
  corrfilter::DesiredResponse g;

  std::string sequence;
  int template_frame = 0;
  int test_frame = 0;
};

}  // namespace cfcf
