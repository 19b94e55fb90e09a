#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cfcf/box.hpp"
#include "cfcf/corrfilter.hpp"
#include "cfcf/dataset.hpp"
#include "cfcf/network.hpp"

namespace cfcf::tracker {

enum class FeatureMode { Gray, GrayGrads, Cfcf, Mcfcf };

const char* to_string(FeatureMode mode) noexcept;
/// "gray", "gray_grads", "cfcf" or "mcfcf"; InvalidArgument otherwise.
FeatureMode parse_feature_mode(const std::string& text);
bool uses_network(FeatureMode mode) noexcept;

struct TrackerConfig {
  FeatureMode features = FeatureMode::GrayGrads;
  double lambda = corrfilter::kDefaultLambda;
  double update_rate = 0.025;
  /// Search side = search_area_factor * 2 sqrt(w h) * scale.
  double search_area_factor = 2.0;
  /// Response sigma = sigma_factor * patch_size.
  double sigma_factor = corrfilter::kDefaultSigmaFactor;
  int patch_size = 101;
  corrfilter::ScaleConfig scale{};
  /// Side of the square patch each scale sample is resized to.
  int scale_patch = 16;
  bool window = true;
  std::optional<std::filesystem::path> model_path;
};

/// Update rate actually used: halved for the network feature modes.
double effective_update_rate(const TrackerConfig& cfg) noexcept;

/// Maps of a square patch: gray -> luma; gray_grads -> luma, |d/dx|, |d/dy|
/// (central differences, clamped borders); cfcf / mcfcf -> network output
/// maps followed by the three gray_grads maps. Luma is shifted by -0.5.
/// Throws MissingModel when a network mode gets no model.
FeatureStack extract_features(const TrackerConfig& cfg, const Tensor& patch,
                              const network::NetworkModel* model);

/// Outer product of two symmetric Hann windows.
RealGrid hann_window(int height, int width);

struct TrackerState {
  TrackerConfig config;
  std::shared_ptr<const network::NetworkModel> model;
  double center_x = 0.0;
  double center_y = 0.0;
  double base_w = 0.0;
  double base_h = 0.0;
  double scale = 1.0;
  int frame_width = 0;
  int frame_height = 0;
  int frame_index = 0;
  RealGrid window;
  corrfilter::DesiredResponse response;
  corrfilter::CorrelationModel translation;
  corrfilter::ScaleModel scale_model;

  double search_side() const noexcept;
  Box box() const noexcept;
};

/// Throws InvalidBox when the box is empty or lies entirely outside the
/// frame, MissingModel when a network mode has no model.
TrackerState init_tracker(const TrackerConfig& cfg, const Tensor& frame, const Box& box,
                          std::shared_ptr<const network::NetworkModel> model = nullptr);

/// Features of the search patch at the current centre and scale.
FeatureStack search_features(const TrackerState& state, const Tensor& frame);

/// One row per feature value, one column per scale, at the current centre.
corrfilter::ScaleSamples scale_samples(const TrackerState& state, const Tensor& frame);

struct StepOutput {
  Box box;
  double peak_value = 0.0;
  int displacement_row = 0;  // patch pixels
  int displacement_col = 0;
  int scale_index = 0;
};

/// Wrapped offset of a peak from the patch centre, in (-n/2, n/2].
int signed_offset(int index, int center, int n) noexcept;

/// Detect, move, re-estimate scale, update both filters.
StepOutput step(TrackerState& state, const Tensor& frame);

struct TrackResult {
  std::vector<Box> boxes;
  std::vector<double> peak_values;  // first entry is the initial frame's self-response
  double fps = 0.0;
};

TrackResult track(const TrackerConfig& cfg, const dataset::Sequence& seq, const Box& init_box,
                  std::shared_ptr<const network::NetworkModel> model = nullptr);

/// Tracks the sequence stored in `sequence_dir`, writes the boxes file and,
/// when `report_path` is set, the JSON run report {fps, frames, peak_values}.
TrackResult track_sequence(const TrackerConfig& cfg, const std::filesystem::path& sequence_dir,
                           const Box& init_box, const std::filesystem::path& boxes_path,
                           const std::optional<std::filesystem::path>& report_path = {});

}  // namespace cfcf::tracker
