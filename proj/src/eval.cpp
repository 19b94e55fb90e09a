#include "cfcf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cfcf/errors.hpp"

namespace cfcf::eval {

double iou(const Box& a, const Box& b) noexcept {
  const double aw = std::max(a.w, 0.0);
  const double ah = std::max(a.h, 0.0);
  const double bw = std::max(b.w, 0.0);
  const double bh = std::max(b.h, 0.0);
  if (a == b) return aw * ah > 0.0 ? 1.0 : 0.0;
  const double iw = std::max(0.0, std::min(a.x + aw, b.x + bw) - std::max(a.x, b.x));
  const double ih = std::max(0.0, std::min(a.y + ah, b.y + bh) - std::max(a.y, b.y));
  const double inter = iw * ih;
  const double uni = aw * ah + bw * bh - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double center_error(const Box& a, const Box& b) noexcept {
  return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

EvalReport evaluate(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  if (pred.size() != gt.size()) {
    throw LengthMismatch(std::to_string(pred.size()) + " predicted boxes but " +
                         std::to_string(gt.size()) + " ground-truth boxes");
  }
  EvalReport r;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].is_zero()) {
      ++r.skipped;
      continue;
    }
    r.iou.push_back(iou(pred[i], gt[i]));
    r.center_error.push_back(center_error(pred[i], gt[i]));
  }
  r.frames = r.iou.size();
  if (r.frames == 0) throw EmptyInput("no frames to evaluate");
  const double n = static_cast<double>(r.frames);

  for (int k = 0; k <= 100; ++k) {
    const double t = k / 100.0;
    const auto hits = std::count_if(r.iou.begin(), r.iou.end(), [t](double v) { return v >= t; });
    r.success_thresholds.push_back(t);
    r.success_curve.push_back(static_cast<double>(hits) / n);
  }
  for (int k = 0; k <= 50; ++k) {
    const double t = k;
    const auto hits = std::count_if(r.center_error.begin(), r.center_error.end(),
                                    [t](double v) { return v <= t; });
    r.precision_thresholds.push_back(t);
    r.precision_curve.push_back(static_cast<double>(hits) / n);
  }
  r.op = r.success_curve[50];
  r.dp = r.precision_curve[20];
  double s = 0.0;
  for (double v : r.success_curve) s += v;
  r.auc = s / static_cast<double>(r.success_curve.size());
  return r;
}

EvalReport evaluate_files(const std::filesystem::path& pred, const std::filesystem::path& gt) {
  return evaluate(read_boxes(pred), read_boxes(gt));
}

std::string to_json(const EvalReport& r) {
  const nlohmann::json j{{"format_version", kReportFormatVersion},
                         {"frames", r.frames},
                         {"skipped", r.skipped},
                         {"op", r.op},
                         {"dp", r.dp},
                         {"auc", r.auc},
                         {"iou", r.iou},
                         {"center_error", r.center_error},
                         {"success_thresholds", r.success_thresholds},
                         {"success_curve", r.success_curve},
                         {"precision_thresholds", r.precision_thresholds},
                         {"precision_curve", r.precision_curve}};
  return j.dump(2);
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(report) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

void write_csv(const EvalReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "kind,threshold,value\n";
  char buf[96];
  for (std::size_t i = 0; i < r.success_curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "success,%.2f,%.6f\n", r.success_thresholds[i], r.success_curve[i]);
    out << buf;
  }
  for (std::size_t i = 0; i < r.precision_curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "precision,%.0f,%.6f\n", r.precision_thresholds[i],
                  r.precision_curve[i]);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace cfcf::eval
