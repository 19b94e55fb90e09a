#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace cfcf {

/// Axis-aligned box in pixels: top-left corner (x, y), width, height.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double center_x() const noexcept { return x + 0.5 * w; }
  double center_y() const noexcept { return y + 0.5 * h; }
  double area() const noexcept { return w * h; }
  bool is_zero() const noexcept { return x == 0.0 && y == 0.0 && w == 0.0 && h == 0.0; }

  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }

  bool operator==(const Box&) const = default;
};

/// Parses "x,y,w,h" (commas, optionally followed by spaces; tabs and spaces
/// are also accepted as separators). Throws ParseError.
Box parse_box(const std::string& text);

/// "x,y,w,h" with two decimals.
std::string format_box(const Box& b);

/// One box per non-empty line. ParseError messages carry the line number.
std::vector<Box> read_boxes(const std::filesystem::path& path);
void write_boxes(const std::filesystem::path& path, const std::vector<Box>& boxes);

}  // namespace cfcf
