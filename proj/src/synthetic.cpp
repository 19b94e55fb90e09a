#include "cfcf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "cfcf/image.hpp"

namespace cfcf::synthetic {
namespace {

// Coarse random colour cells, bilinearly upsampled: smooth but rich texture.
Tensor object_texture(int size, std::mt19937_64& rng) {
  const int cells = 6;
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Tensor coarse(3, cells, cells);
  for (auto& v : coarse.data) v = u(rng);
  return image::crop_resize(coarse, 0.5 * cells, 0.5 * cells, cells, cells, size, size);
}

Tensor noise_background(int width, int height, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.25, 0.75);
  Tensor bg(3, height, width);
  for (auto& v : bg.data) v = u(rng);
  return bg;
}

void paint(Tensor& frame, const Tensor& texture, const Box& box) {
  const int r0 = std::max(0, static_cast<int>(std::floor(box.y)));
  const int r1 = std::min(frame.height, static_cast<int>(std::ceil(box.y + box.h)));
  const int c0 = std::max(0, static_cast<int>(std::floor(box.x)));
  const int c1 = std::min(frame.width, static_cast<int>(std::ceil(box.x + box.w)));
  const double sy = texture.height / box.h;
  const double sx = texture.width / box.w;
  for (int r = r0; r < r1; ++r) {
    const double v = (r + 0.5 - box.y) * sy;
    if (v < 0.0 || v >= texture.height) continue;
    for (int c = c0; c < c1; ++c) {
      const double u = (c + 0.5 - box.x) * sx;
      if (u < 0.0 || u >= texture.width) continue;
      for (int ch = 0; ch < 3; ++ch) {
        frame.at(ch, r, c) = image::sample_bilinear(texture, ch, v - 0.5, u - 0.5);
      }
    }
  }
}

void add_noise(Tensor& frame, double amplitude, std::mt19937_64& rng) {
  if (amplitude <= 0.0) return;
  std::normal_distribution<double> n(0.0, amplitude);
  for (auto& v : frame.data) v = std::clamp(v + n(rng), 0.0, 1.0);
}

}  // namespace

SyntheticSequence translating_square(const TranslateOptions& o) {
  if (o.frames < 1 || o.object < 1 || o.width < 1 || o.height < 1) {
    throw InvalidArgument("invalid synthetic sequence options");
  }
  std::mt19937_64 rng(o.seed);
  const Tensor texture = object_texture(o.object, rng);
  const Tensor background = noise_background(o.width, o.height, rng);
  SyntheticSequence seq;
  seq.name = "translate";
  for (int t = 0; t < o.frames; ++t) {
    const Box box{o.start_x + o.vx * t, o.start_y + o.vy * t, static_cast<double>(o.object),
                  static_cast<double>(o.object)};
    Tensor frame = background;
    paint(frame, texture, box);
    add_noise(frame, o.frame_noise, rng);
    seq.frames.push_back(std::move(frame));
    seq.boxes.push_back(box);
  }
  return seq;
}

SyntheticSequence zoom_square(const ZoomOptions& o) {
  if (o.frames < 1 || o.object < 1 || !(o.final_scale > 0.0)) {
    throw InvalidArgument("invalid synthetic sequence options");
  }
  std::mt19937_64 rng(o.seed);
  const Tensor texture = object_texture(o.object, rng);
  const Tensor background = noise_background(o.width, o.height, rng);
  SyntheticSequence seq;
  seq.name = "zoom";
  const double cx = 0.5 * o.width;
  const double cy = 0.5 * o.height;
  for (int t = 0; t < o.frames; ++t) {
    const double s =
        o.frames == 1 ? 1.0 : std::pow(o.final_scale, static_cast<double>(t) / (o.frames - 1));
    const double side = o.object * s;
    const Box box = Box::from_center(cx, cy, side, side);
    Tensor frame = background;
    paint(frame, texture, box);
    add_noise(frame, o.frame_noise, rng);
    seq.frames.push_back(std::move(frame));
    seq.boxes.push_back(box);
  }
  return seq;
}

dataset::Sequence to_sequence(const SyntheticSequence& seq) {
  return dataset::in_memory_sequence(seq.name, seq.frames, seq.boxes);
}

void write_sequence(const SyntheticSequence& seq, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%08zu.png", i + 1);
    image::write_png(dir / name, seq.frames[i]);
  }
  write_boxes(dir / "groundtruth.txt", seq.boxes);
}

}  // namespace cfcf::synthetic
