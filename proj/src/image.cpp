#include "cfcf/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace cfcf::image {

Tensor read_image(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot decode image " + path.string());
  Tensor t(3, m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<cv::Vec3b>(r);
    for (int c = 0; c < m.cols; ++c) {
      for (int ch = 0; ch < 3; ++ch) t.at(ch, r, c) = row[c][2 - ch] / 255.0;
    }
  }
  return t;
}

void write_png(const std::filesystem::path& path, const Tensor& rgb) {
  if (rgb.channels != 3 || rgb.height < 1 || rgb.width < 1) {
    throw InvalidArgument("write_png expects a non-empty 3-channel tensor");
  }
  cv::Mat m(rgb.height, rgb.width, CV_8UC3);
  for (int r = 0; r < rgb.height; ++r) {
    auto* row = m.ptr<cv::Vec3b>(r);
    for (int c = 0; c < rgb.width; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(rgb.at(ch, r, c), 0.0, 1.0);
        row[c][2 - ch] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6, cv::IMWRITE_PNG_STRATEGY,
                                cv::IMWRITE_PNG_STRATEGY_DEFAULT};
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), m, params);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

double sample_bilinear(const Tensor& img, int channel, double row, double col) {
  row = std::clamp(row, 0.0, static_cast<double>(img.height - 1));
  col = std::clamp(col, 0.0, static_cast<double>(img.width - 1));
  const int r0 = static_cast<int>(std::floor(row));
  const int c0 = static_cast<int>(std::floor(col));
  const int r1 = std::min(r0 + 1, img.height - 1);
  const int c1 = std::min(c0 + 1, img.width - 1);
  const double fr = row - r0;
  const double fc = col - c0;
  const double* p = img.channel_data(channel);
  const auto at = [&](int r, int c) { return p[static_cast<std::size_t>(r) * img.width + c]; };
  const double top = at(r0, c0) + fc * (at(r0, c1) - at(r0, c0));
  const double bottom = at(r1, c0) + fc * (at(r1, c1) - at(r1, c0));
  return top + fr * (bottom - top);
}

Tensor crop_resize(const Tensor& img, double center_x, double center_y, double side_w,
                   double side_h, int out_w, int out_h) {
  if (img.channels < 1 || img.height < 1 || img.width < 1) throw EmptyImage("image has no pixels");
  if (out_w < 1 || out_h < 1 || !(side_w > 0.0) || !(side_h > 0.0)) {
    throw InvalidArgument("crop needs a positive region and output size");
  }
  Tensor out(img.channels, out_h, out_w);
  const double sx = side_w / out_w;
  const double sy = side_h / out_h;
  const double x0 = center_x - 0.5 * side_w;
  const double y0 = center_y - 0.5 * side_h;
  for (int ch = 0; ch < img.channels; ++ch) {
    for (int r = 0; r < out_h; ++r) {
      const double row = y0 + (r + 0.5) * sy - 0.5;
      for (int c = 0; c < out_w; ++c) {
        out.at(ch, r, c) = sample_bilinear(img, ch, row, x0 + (c + 0.5) * sx - 0.5);
      }
    }
  }
  return out;
}

double crop_side(const Box& box) { return 2.0 * std::sqrt(box.w * box.h); }

Tensor crop_square(const Tensor& img, const Box& box, int size) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw InvalidBox("box width and height must be positive");
  const double side = crop_side(box);
  return crop_resize(img, box.center_x(), box.center_y(), side, side, size, size);
}

RealGrid luma(const Tensor& rgb) {
  if (rgb.channels != 3 || rgb.height < 1 || rgb.width < 1) {
    throw InvalidArgument("luma expects a non-empty RGB tensor");
  }
  RealGrid g(rgb.height, rgb.width);
  const double* r = rgb.channel_data(0);
  const double* gr = rgb.channel_data(1);
  const double* b = rgb.channel_data(2);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.299 * r[i] + 0.587 * gr[i] + 0.114 * b[i];
  return g;
}

Tensor gray_to_rgb(const RealGrid& gray) {
  Tensor t(3, gray.height(), gray.width());
  for (int ch = 0; ch < 3; ++ch) std::copy(gray.begin(), gray.end(), t.channel_data(ch));
  return t;
}

}  // namespace cfcf::image
