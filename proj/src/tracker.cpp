#include "cfcf/tracker.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "cfcf/image.hpp"

namespace cfcf::tracker {
namespace {

constexpr double kMinTargetSide = 4.0;

std::vector<double> hann(int n) {
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  if (n < 2) return w;
  for (int i = 0; i < n; ++i) {
    w[static_cast<std::size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / (n - 1)));
  }
  return w;
}

// Hann weights over the scale axis without the zero end points, so every
// scale can win.
std::vector<double> scale_window(int n) {
  const std::vector<double> full = hann(n + 2);
  return {full.begin() + 1, full.end() - 1};
}

void gradient_maps(const RealGrid& gray, RealGrid& dx, RealGrid& dy) {
  const int h = gray.height();
  const int w = gray.width();
  dx = RealGrid(h, w);
  dy = RealGrid(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int cl = std::max(c - 1, 0);
      const int cr = std::min(c + 1, w - 1);
      const int ru = std::max(r - 1, 0);
      const int rd = std::min(r + 1, h - 1);
      dx(r, c) = 0.5 * std::abs(gray(r, cr) - gray(r, cl));
      dy(r, c) = 0.5 * std::abs(gray(rd, c) - gray(ru, c));
    }
  }
}

std::vector<RealGrid> hand_crafted(const Tensor& patch, bool with_gradients) {
  RealGrid gray = image::luma(patch);
  for (auto& v : gray) v -= 0.5;
  std::vector<RealGrid> maps{gray};
  if (with_gradients) {
    RealGrid dx;
    RealGrid dy;
    gradient_maps(gray, dx, dy);
    maps.push_back(std::move(dx));
    maps.push_back(std::move(dy));
  }
  return maps;
}

Tensor search_patch(const TrackerState& s, const Tensor& frame) {
  const double side = s.search_side();
  return image::crop_resize(frame, s.center_x, s.center_y, side, side, s.config.patch_size,
                            s.config.patch_size);
}

double clamp_scale(const TrackerState& s, double scale) {
  const double lo = kMinTargetSide / std::min(s.base_w, s.base_h);
  const double hi = std::max(lo, std::min(s.frame_width / s.base_w, s.frame_height / s.base_h));
  return std::clamp(scale, lo, hi);
}

void check_frame(const TrackerState& s, const Tensor& frame) {
  if (frame.channels != 3 || frame.width != s.frame_width || frame.height != s.frame_height) {
    throw ShapeMismatch("frame size differs from the first frame");
  }
}

}  // namespace

const char* to_string(FeatureMode mode) noexcept {
  switch (mode) {
    case FeatureMode::Gray: return "gray";
    case FeatureMode::GrayGrads: return "gray_grads";
    case FeatureMode::Cfcf: return "cfcf";
    case FeatureMode::Mcfcf: return "mcfcf";
  }
  return "?";
}

FeatureMode parse_feature_mode(const std::string& text) {
  for (FeatureMode m : {FeatureMode::Gray, FeatureMode::GrayGrads, FeatureMode::Cfcf,
                        FeatureMode::Mcfcf}) {
    if (text == to_string(m)) return m;
  }
  throw InvalidArgument("unknown feature mode \"" + text + "\"");
}

bool uses_network(FeatureMode mode) noexcept {
  return mode == FeatureMode::Cfcf || mode == FeatureMode::Mcfcf;
}

double effective_update_rate(const TrackerConfig& cfg) noexcept {
  return uses_network(cfg.features) ? 0.5 * cfg.update_rate : cfg.update_rate;
}

RealGrid hann_window(int height, int width) {
  const auto wr = hann(height);
  const auto wc = hann(width);
  RealGrid w(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) w(r, c) = wr[static_cast<std::size_t>(r)] * wc[static_cast<std::size_t>(c)];
  }
  return w;
}

FeatureStack extract_features(const TrackerConfig& cfg, const Tensor& patch,
                              const network::NetworkModel* model) {
  if (patch.channels != 3 || patch.height != patch.width || patch.height < 1) {
    throw ShapeMismatch("feature extraction expects a square RGB patch");
  }
  FeatureStack out;
  if (uses_network(cfg.features)) {
    if (model == nullptr) {
      throw MissingModel(std::string(to_string(cfg.features)) + " features need a model");
    }
    for (auto& m : network::forward(*model, patch, network::Mode::Eval)) {
      double mean = 0.0;
      for (double v : m) mean += v;
      mean /= static_cast<double>(m.size());
      for (auto& v : m) v -= mean;
      out.push_back(std::move(m));
    }
  }
  for (auto& m : hand_crafted(patch, cfg.features != FeatureMode::Gray)) out.push_back(std::move(m));
  if (cfg.window) {
    const RealGrid w = hann_window(out.height(), out.width());
    for (auto& m : out) {
      for (std::size_t i = 0; i < m.size(); ++i) m[i] *= w[i];
    }
  }
  return out;
}

double TrackerState::search_side() const noexcept {
  return config.search_area_factor * 2.0 * std::sqrt(base_w * base_h) * scale;
}

Box TrackerState::box() const noexcept {
  return Box::from_center(center_x, center_y, base_w * scale, base_h * scale);
}

int signed_offset(int index, int center, int n) noexcept {
  int d = ((index - center) % n + n) % n;  // [0, n)
  if (2 * d > n) d -= n;                   // (-n/2, n/2]
  return d;
}

FeatureStack search_features(const TrackerState& state, const Tensor& frame) {
  return extract_features(state.config, search_patch(state, frame), state.model.get());
}

corrfilter::ScaleSamples scale_samples(const TrackerState& s, const Tensor& frame) {
  const int S = s.config.scale.num_scales;
  const int c = S / 2;
  const int sp = s.config.scale_patch;
  const std::vector<double> weights = scale_window(S);
  corrfilter::ScaleSamples samples(3 * sp * sp, S);
  for (int i = 0; i < S; ++i) {
    const double f = s.scale * std::pow(s.config.scale.scale_step, i - c);
    const Tensor patch =
        image::crop_resize(frame, s.center_x, s.center_y, s.base_w * f, s.base_h * f, sp, sp);
    int row = 0;
    for (const auto& m : hand_crafted(patch, true)) {
      for (double v : m) samples(row++, i) = v * weights[static_cast<std::size_t>(i)];
    }
  }
  return samples;
}

TrackerState init_tracker(const TrackerConfig& cfg, const Tensor& frame, const Box& box,
                          std::shared_ptr<const network::NetworkModel> model) {
  if (frame.channels != 3 || frame.height < 1 || frame.width < 1) {
    throw EmptyImage("first frame has no pixels");
  }
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw InvalidBox("box width and height must be positive");
  if (box.x >= frame.width || box.y >= frame.height || box.x + box.w <= 0.0 ||
      box.y + box.h <= 0.0) {
    throw InvalidBox("box " + format_box(box) + " lies outside the frame");
  }
  if (cfg.patch_size < 3 || cfg.scale_patch < 2 || !(cfg.search_area_factor > 0.0)) {
    throw InvalidArgument("invalid tracker configuration");
  }
  if (uses_network(cfg.features) && !model) {
    throw MissingModel(std::string(to_string(cfg.features)) + " features need a model");
  }

  TrackerState s;
  s.config = cfg;
  s.model = std::move(model);
  s.center_x = box.center_x();
  s.center_y = box.center_y();
  s.base_w = box.w;
  s.base_h = box.h;
  s.frame_width = frame.width;
  s.frame_height = frame.height;
  const int p = cfg.patch_size;
  s.response = corrfilter::make_desired_response(p, p, p / 2, p / 2, cfg.sigma_factor * p);
  const double mu = effective_update_rate(cfg);
  s.translation = corrfilter::init_model(search_features(s, frame), s.response.grid, cfg.lambda, mu);
  corrfilter::ScaleConfig sc = cfg.scale;
  if (uses_network(cfg.features)) sc.update_rate *= 0.5;
  s.config.scale = sc;
  s.scale_model = corrfilter::init_scale_model(scale_samples(s, frame), sc);
  return s;
}

StepOutput step(TrackerState& s, const Tensor& frame) {
  check_frame(s, frame);
  const int p = s.config.patch_size;
  const corrfilter::Detection det = corrfilter::detect(s.translation, search_features(s, frame));
  StepOutput out;
  out.peak_value = det.peak.value;
  out.displacement_row = signed_offset(det.peak.row, s.response.peak_row, p);
  out.displacement_col = signed_offset(det.peak.col, s.response.peak_col, p);
  const double px = s.search_side() / p;
  s.center_x += out.displacement_col * px;
  s.center_y += out.displacement_row * px;

  out.scale_index = corrfilter::scale_detect(s.scale_model, scale_samples(s, frame));
  s.scale = clamp_scale(
      s, s.scale * std::pow(s.config.scale.scale_step, out.scale_index - s.scale_model.center_index()));

  s.translation = corrfilter::update_model(s.translation, search_features(s, frame), s.response.grid);
  s.scale_model = corrfilter::update_scale_model(s.scale_model, scale_samples(s, frame));
  ++s.frame_index;
  out.box = s.box();
  return out;
}

TrackResult track(const TrackerConfig& cfg, const dataset::Sequence& seq, const Box& init_box,
                  std::shared_ptr<const network::NetworkModel> model) {
  if (seq.length() < 1) throw EmptyInput("sequence has no frames");
  TrackResult result;
  const auto start = std::chrono::steady_clock::now();
  const Tensor first = seq.frame(0);
  TrackerState state = init_tracker(cfg, first, init_box, std::move(model));
  result.boxes.push_back(init_box);
  result.peak_values.push_back(
      corrfilter::detect(state.translation, search_features(state, first)).peak.value);
  for (int i = 1; i < seq.length(); ++i) {
    const StepOutput o = step(state, seq.frame(i));
    result.boxes.push_back(o.box);
    result.peak_values.push_back(o.peak_value);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.fps = seconds > 0.0 ? seq.length() / seconds : 0.0;
  return result;
}

TrackResult track_sequence(const TrackerConfig& cfg, const std::filesystem::path& sequence_dir,
                           const Box& init_box, const std::filesystem::path& boxes_path,
                           const std::optional<std::filesystem::path>& report_path) {
  const auto frames = dataset::list_frames(sequence_dir);
  if (frames.empty()) throw IoError(sequence_dir.string() + " contains no frame images");
  std::shared_ptr<const network::NetworkModel> model;
  if (uses_network(cfg.features)) {
    if (!cfg.model_path) {
      throw MissingModel(std::string(to_string(cfg.features)) + " features need a model");
    }
    model = std::make_shared<network::NetworkModel>(network::load_model(*cfg.model_path));
  }
  dataset::Sequence seq;
  seq.name = sequence_dir.filename().string();
  seq.boxes.assign(frames.size(), Box{});
  seq.load_frame = [&frames](int i) { return image::read_image(frames[static_cast<std::size_t>(i)]); };

  TrackResult result = track(cfg, seq, init_box, std::move(model));
  write_boxes(boxes_path, result.boxes);
  if (report_path) {
    const nlohmann::json j{{"format_version", 1},
                           {"features", to_string(cfg.features)},
                           {"fps", result.fps},
                           {"frames", result.boxes.size()},
                           {"peak_values", result.peak_values}};
    std::ofstream out(*report_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + report_path->string());
    out << j.dump(2) << '\n';
  }
  return result;
}

}  // namespace cfcf::tracker
