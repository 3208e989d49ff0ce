#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "asdl/geometry.hpp"
#include "asdl/sim.hpp"

namespace asdl {

struct FramePrediction {
  std::int64_t frame_index = 0;
  int camera_id = 0;
  double x_pred_norm = 0.0;  // [0, 1]
  double confidence = 0.0;   // [0, 1]
};

struct MetricsOptions {
  double tolerance_px = 89.0;       // spatial tolerance, +-2 degrees
  int n_thresholds = 101;           // sigmoid-spaced sweep size
  double image_width_px = 2448.0;   // converts normalized predictions to pixels
  double operating_threshold = 0.5; // aD and detection error operating point
};

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct BestF1 {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
};

struct AverageDistance {
  double px = 0.0;
  double deg = 0.0;
};

struct MetricsReport {
  double ap = 0.0;
  BestF1 f1_best;
  double ad_px = 0.0;   // NaN when no positive detection qualifies
  double ad_deg = 0.0;  // NaN when no positive detection qualifies
  double det_err = 0.0;
  std::vector<PrPoint> pr_curve;
};

// Confidence thresholds drawn from a sigmoid map of an even grid, denser near
// 0 and 1, with exact 0.0 and 1.0 endpoints appended; strictly ascending.
std::vector<double> sigmoid_thresholds(int n = 101);

// A prediction is positive when confidence > threshold (strict). A positive
// on an active frame is a true positive when the pixel error is within the
// tolerance; every other positive is a false positive. Active frames without
// a true positive count as false negatives, so TP + FN equals the number of
// active frames at every threshold (mislocalized positives land in both FP
// and FN, as in object-detection scoring).
ConfusionCounts classify_frames(const std::vector<FramePrediction>& preds,
                                const std::vector<FrameLabel>& labels, double threshold,
                                double tolerance_px, double image_width_px);

std::vector<PrPoint> precision_recall_curve(const std::vector<FramePrediction>& preds,
                                            const std::vector<FrameLabel>& labels,
                                            const MetricsOptions& options);

// Same sweep over caller-provided thresholds.
std::vector<PrPoint> precision_recall_curve(const std::vector<FramePrediction>& preds,
                                            const std::vector<FrameLabel>& labels,
                                            const MetricsOptions& options,
                                            const std::vector<double>& thresholds);

// Area under the precision-recall curve with the monotone precision
// envelope, integrated over recall from 0.
double average_precision(const std::vector<PrPoint>& pr_curve);

// Maximum F1 over the curve; ties resolved toward the higher threshold.
BestF1 best_f1(const std::vector<PrPoint>& pr_curve);

// Mean |predicted - ground truth| pixel distance over positive detections on
// active frames (true and false positives alike), plus the linear conversion
// to degrees. Throws DataError when nothing qualifies at the threshold.
AverageDistance average_distance(const std::vector<FramePrediction>& preds,
                                 const std::vector<FrameLabel>& labels, const CameraModel& camera,
                                 double threshold, double image_width_px);

// Fraction of frames whose active/inactive decision at the threshold is
// wrong. Localization plays no part.
double detection_error(const std::vector<FramePrediction>& preds,
                       const std::vector<FrameLabel>& labels, double threshold = 0.5);

MetricsReport compute_report(const std::vector<FramePrediction>& preds,
                             const std::vector<FrameLabel>& labels, const CameraModel& camera,
                             const MetricsOptions& options);

void save_report_json(const std::filesystem::path& path, const MetricsReport& report);
void write_pr_csv(const std::filesystem::path& path, const std::vector<PrPoint>& curve);
void write_pr_svg(const std::filesystem::path& path, const std::vector<PrPoint>& curve,
                  const BestF1& best);

void write_predictions(const std::filesystem::path& path,
                       const std::vector<FramePrediction>& preds);
std::vector<FramePrediction> read_predictions(const std::filesystem::path& path);

// One line in the style of the results table: DetErr, aD, AP, F1.
std::string format_report_row(const MetricsReport& report);

}  // namespace asdl
