#include "cfcf/box.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "cfcf/errors.hpp"

namespace cfcf {

Box parse_box(const std::string& text) {
  double v[4];
  const char* p = text.data();
  const char* end = p + text.size();
  auto skip = [&](bool allow_comma) {
    bool comma = false;
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r' || (allow_comma && *p == ',' && !comma))) {
      if (*p == ',') comma = true;
      ++p;
    }
  };
  skip(false);
  for (int i = 0; i < 4; ++i) {
    if (i > 0) {
      const char* before = p;
      skip(true);
      if (p == before) throw ParseError("expected a separator in \"" + text + "\"");
    }
    const auto r = std::from_chars(p, end, v[i]);
    if (r.ec != std::errc()) throw ParseError("expected a number in \"" + text + "\"");
    p = r.ptr;
  }
  skip(false);
  if (p != end) throw ParseError("trailing characters in \"" + text + "\"");
  return {v[0], v[1], v[2], v[3]};
}

std::string format_box(const Box& b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f,%.2f", b.x, b.y, b.w, b.h);
  return buf;
}

std::vector<Box> read_boxes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Box> boxes;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      boxes.push_back(parse_box(line));
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return boxes;
}

void write_boxes(const std::filesystem::path& path, const std::vector<Box>& boxes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& b : boxes) out << format_box(b) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace cfcf
