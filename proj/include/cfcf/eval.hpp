#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cfcf/box.hpp"

namespace cfcf::eval {

inline constexpr int kReportFormatVersion = 1;

/// Intersection over union; 0 when the union is empty. Negative sizes count
/// as empty boxes.
double iou(const Box& a, const Box& b) noexcept;

/// Euclidean distance between box centres.
double center_error(const Box& a, const Box& b) noexcept;

struct EvalReport {
  std::vector<double> iou;           // evaluated frames only
  std::vector<double> center_error;
  std::vector<double> success_thresholds;    // 0, 0.01, ..., 1
  std::vector<double> success_curve;         // fraction with IoU >= t
  std::vector<double> precision_thresholds;  // 0, 1, ..., 50 px
  std::vector<double> precision_curve;       // fraction with error <= t
  double op = 0.0;   // success at 0.5
  double dp = 0.0;   // precision at 20 px
  double auc = 0.0;  // mean of the success curve
  std::size_t frames = 0;
  std::size_t skipped = 0;  // ground truth marked absent (all-zero box)
};

/// Throws LengthMismatch for different lengths and EmptyInput when no frame
/// is left to evaluate.
EvalReport evaluate(const std::vector<Box>& pred, const std::vector<Box>& gt);

/// Reads both boxes files (ParseError carries the line number).
EvalReport evaluate_files(const std::filesystem::path& pred, const std::filesystem::path& gt);

std::string to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& path);

/// Columns: kind, threshold, value (kind is "success" or "precision").
void write_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace cfcf::eval
