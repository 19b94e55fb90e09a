#include "cfcf/tensor.hpp"

#include <algorithm>

namespace cfcf {

FeatureStack to_feature_stack(const Tensor& t) {
  if (t.channels < 1 || t.height < 1 || t.width < 1) {
    throw InvalidArgument("tensor has no elements");
  }
  FeatureStack s(t.channels, t.height, t.width);
  for (int c = 0; c < t.channels; ++c) {
    std::copy_n(t.channel_data(c), t.plane(), s[c].data());
  }
  return s;
}

Tensor from_feature_stack(const FeatureStack& s) {
  Tensor t(s.channels(), s.height(), s.width());
  for (int c = 0; c < s.channels(); ++c) std::copy(s[c].begin(), s[c].end(), t.channel_data(c));
  return t;
}

}  // namespace cfcf
