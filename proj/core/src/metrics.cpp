#include "asdl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "asdl/errors.hpp"
#include "asdl/keyvalue.hpp"

namespace asdl {

namespace {

struct JoinedFrame {
  bool active = false;
  bool has_mouth = false;
  double mouth_x_px = 0.0;
  double x_pred_norm = 0.0;
  double confidence = 0.0;
};

std::string key_string(std::int64_t frame, int camera) {
  return "(frame " + std::to_string(frame) + ", camera " + std::to_string(camera) + ")";
}

// Aligns predictions and labels on (frame_index, camera_id); both sides must
// cover exactly the same keys.
std::vector<JoinedFrame> join_frames(const std::vector<FramePrediction>& preds,
                                     const std::vector<FrameLabel>& labels) {
  auto pred_key = [](const FramePrediction& p) {
    return std::make_pair(p.frame_index, p.camera_id);
  };
  auto label_key = [](const FrameLabel& l) {
    return std::make_pair(static_cast<std::int64_t>(l.frame_index), l.camera_id);
  };

  std::vector<const FramePrediction*> ps;
  ps.reserve(preds.size());
  for (const auto& p : preds) ps.push_back(&p);
  std::vector<const FrameLabel*> ls;
  ls.reserve(labels.size());
  for (const auto& l : labels) ls.push_back(&l);
  std::sort(ps.begin(), ps.end(),
            [&](const auto* a, const auto* b) { return pred_key(*a) < pred_key(*b); });
  std::sort(ls.begin(), ls.end(),
            [&](const auto* a, const auto* b) { return label_key(*a) < label_key(*b); });

  for (std::size_t i = 1; i < ps.size(); ++i) {
    if (pred_key(*ps[i]) == pred_key(*ps[i - 1])) {
      throw DataError("duplicate prediction key " +
                      key_string(ps[i]->frame_index, ps[i]->camera_id));
    }
  }

  std::vector<JoinedFrame> joined;
  joined.reserve(ps.size());
  std::size_t i = 0, j = 0;
  while (i < ps.size() || j < ls.size()) {
    if (i < ps.size() && j < ls.size() && pred_key(*ps[i]) == label_key(*ls[j])) {
      JoinedFrame f;
      f.active = ls[j]->active;
      f.has_mouth = ls[j]->has_mouth;
      f.mouth_x_px = ls[j]->mouth_x_px;
      f.x_pred_norm = ps[i]->x_pred_norm;
      f.confidence = ps[i]->confidence;
      joined.push_back(f);
      ++i;
      ++j;
    } else if (j >= ls.size() || (i < ps.size() && pred_key(*ps[i]) < label_key(*ls[j]))) {
      throw DataError("prediction without a matching label at " +
                      key_string(ps[i]->frame_index, ps[i]->camera_id));
    } else {
      throw DataError("label without a matching prediction at " +
                      key_string(ls[j]->frame_index, ls[j]->camera_id));
    }
  }
  return joined;
}

// Detection-style counting: a positive on an active frame is a true positive
// only inside the tolerance; every other positive is a false positive. An
// active frame without a true positive counts as a false negative, so
// TP + FN always equals the number of active frames (a mislocalized positive
// therefore contributes to both FP and FN, as in object-detection scoring).
ConfusionCounts count_at(const std::vector<JoinedFrame>& frames, double threshold,
                         double tolerance_px, double image_width_px) {
  ConfusionCounts c;
  for (const auto& f : frames) {
    const bool positive = f.confidence > threshold;
    const bool true_positive =
        positive && f.active && f.has_mouth &&
        std::abs(f.x_pred_norm * image_width_px - f.mouth_x_px) <= tolerance_px;
    if (positive) {
      if (true_positive) {
        ++c.tp;
      } else {
        ++c.fp;
      }
    } else if (!f.active) {
      ++c.tn;
    }
    if (f.active && !true_positive) ++c.fn;
  }
  return c;
}

std::vector<PrPoint> sweep(const std::vector<JoinedFrame>& frames,
                           const std::vector<double>& thresholds, double tolerance_px,
                           double image_width_px) {
  bool any_active = false;
  for (const auto& f : frames) any_active = any_active || f.active;
  if (!any_active) throw DataError("precision/recall needs at least one active labeled frame");

  std::vector<PrPoint> curve;
  curve.reserve(thresholds.size());
  for (double th : thresholds) {
    const ConfusionCounts c = count_at(frames, th, tolerance_px, image_width_px);
    PrPoint p;
    p.threshold = th;
    p.precision =
        (c.tp + c.fp) == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    p.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    curve.push_back(p);
  }
  return curve;
}

}  // namespace

std::vector<double> sigmoid_thresholds(int n) {
  if (n < 3) throw std::invalid_argument("sigmoid_thresholds needs n >= 3");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n) + 2);
  constexpr double kZRange = 8.0;
  for (int i = 0; i < n; ++i) {
    const double z = -kZRange + 2.0 * kZRange * i / (n - 1);
    out.push_back(1.0 / (1.0 + std::exp(-z)));
  }
  out.push_back(0.0);
  out.push_back(1.0);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ConfusionCounts classify_frames(const std::vector<FramePrediction>& preds,
                                const std::vector<FrameLabel>& labels, double threshold,
                                double tolerance_px, double image_width_px) {
  return count_at(join_frames(preds, labels), threshold, tolerance_px, image_width_px);
}

std::vector<PrPoint> precision_recall_curve(const std::vector<FramePrediction>& preds,
                                            const std::vector<FrameLabel>& labels,
                                            const MetricsOptions& options) {
  return sweep(join_frames(preds, labels), sigmoid_thresholds(options.n_thresholds),
               options.tolerance_px, options.image_width_px);
}

std::vector<PrPoint> precision_recall_curve(const std::vector<FramePrediction>& preds,
                                            const std::vector<FrameLabel>& labels,
                                            const MetricsOptions& options,
                                            const std::vector<double>& thresholds) {
  return sweep(join_frames(preds, labels), thresholds, options.tolerance_px,
               options.image_width_px);
}

double average_precision(const std::vector<PrPoint>& pr_curve) {
  if (pr_curve.empty()) throw std::invalid_argument("average_precision: empty curve");
  std::vector<PrPoint> pts = pr_curve;
  std::sort(pts.begin(), pts.end(), [](const PrPoint& a, const PrPoint& b) {
    return a.recall < b.recall;
  });
  // Monotone envelope: precision at recall r becomes the best precision
  // achievable at recall >= r.
  std::vector<double> envelope(pts.size());
  double best = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    best = std::max(best, pts[i].precision);
    envelope[i] = best;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ap += (pts[i].recall - prev_recall) * envelope[i];
    prev_recall = pts[i].recall;
  }
  return ap;
}

BestF1 best_f1(const std::vector<PrPoint>& pr_curve) {
  if (pr_curve.empty()) throw std::invalid_argument("best_f1: empty curve");
  std::vector<PrPoint> pts = pr_curve;
  std::sort(pts.begin(), pts.end(), [](const PrPoint& a, const PrPoint& b) {
    return a.threshold < b.threshold;
  });
  BestF1 best;
  best.f1 = -1.0;
  for (const auto& p : pts) {
    const double denom = p.precision + p.recall;
    const double f1 = denom > 0.0 ? 2.0 * p.precision * p.recall / denom : 0.0;
    if (f1 >= best.f1) {  // >= keeps the highest threshold among ties
      best.f1 = f1;
      best.precision = p.precision;
      best.recall = p.recall;
      best.threshold = p.threshold;
    }
  }
  return best;
}

AverageDistance average_distance(const std::vector<FramePrediction>& preds,
                                 const std::vector<FrameLabel>& labels, const CameraModel& camera,
                                 double threshold, double image_width_px) {
  const auto frames = join_frames(preds, labels);
  double sum = 0.0;
  std::int64_t count = 0;
  for (const auto& f : frames) {
    if (!(f.confidence > threshold) || !f.active || !f.has_mouth) continue;
    sum += std::abs(f.x_pred_norm * image_width_px - f.mouth_x_px);
    ++count;
  }
  if (count == 0) {
    throw DataError("average distance undefined: no positive detection on an active frame");
  }
  AverageDistance ad;
  ad.px = sum / static_cast<double>(count);
  ad.deg = pixel_error_to_degrees(camera, ad.px);
  return ad;
}

double detection_error(const std::vector<FramePrediction>& preds,
                       const std::vector<FrameLabel>& labels, double threshold) {
  const auto frames = join_frames(preds, labels);
  if (frames.empty()) throw DataError("detection error undefined on an empty frame set");
  std::int64_t wrong = 0;
  for (const auto& f : frames) {
    if ((f.confidence > threshold) != f.active) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(frames.size());
}

MetricsReport compute_report(const std::vector<FramePrediction>& preds,
                             const std::vector<FrameLabel>& labels, const CameraModel& camera,
                             const MetricsOptions& options) {
  MetricsReport report;
  report.pr_curve = precision_recall_curve(preds, labels, options);
  report.ap = average_precision(report.pr_curve);
  report.f1_best = best_f1(report.pr_curve);
  report.det_err = detection_error(preds, labels, options.operating_threshold);
  try {
    const AverageDistance ad = average_distance(preds, labels, camera,
                                                options.operating_threshold,
                                                options.image_width_px);
    report.ad_px = ad.px;
    report.ad_deg = ad.deg;
  } catch (const DataError&) {
    report.ad_px = std::numeric_limits<double>::quiet_NaN();
    report.ad_deg = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

void save_report_json(const std::filesystem::path& path, const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["ap"] = report.ap;
  j["f1_best"] = {{"f1", report.f1_best.f1},
                  {"precision", report.f1_best.precision},
                  {"recall", report.f1_best.recall},
                  {"threshold", report.f1_best.threshold}};
  if (std::isnan(report.ad_px)) {
    j["ad_px"] = nullptr;
    j["ad_deg"] = nullptr;
  } else {
    j["ad_px"] = report.ad_px;
    j["ad_deg"] = report.ad_deg;
  }
  j["det_err"] = report.det_err;
  auto curve = nlohmann::ordered_json::array();
  for (const auto& p : report.pr_curve) {
    curve.push_back({{"threshold", p.threshold},
                     {"precision", p.precision},
                     {"recall", p.recall}});
  }
  j["pr_curve"] = std::move(curve);

  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("short write on report: " + path.string());
}

void write_pr_csv(const std::filesystem::path& path, const std::vector<PrPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write PR curve: " + path.string());
  out << "threshold,precision,recall\n";
  for (const auto& p : curve) {
    out << format_double(p.threshold) << "," << format_double(p.precision) << ","
        << format_double(p.recall) << "\n";
  }
}

void write_pr_svg(const std::filesystem::path& path, const std::vector<PrPoint>& curve,
                  const BestF1& best) {
  constexpr int kW = 640;
  constexpr int kH = 520;
  constexpr int kMargin = 60;
  const int plot_w = kW - 2 * kMargin;
  const int plot_h = kH - 2 * kMargin;
  auto px = [&](double recall) { return kMargin + recall * plot_w; };
  auto py = [&](double precision) { return kH - kMargin - precision * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  svg << "  <rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    svg << "  <line x1=\"" << px(v) << "\" y1=\"" << py(0) << "\" x2=\"" << px(v) << "\" y2=\""
        << py(1) << "\" stroke=\"#dddddd\"/>\n";
    svg << "  <line x1=\"" << px(0) << "\" y1=\"" << py(v) << "\" x2=\"" << px(1) << "\" y2=\""
        << py(v) << "\" stroke=\"#dddddd\"/>\n";
    svg << "  <text x=\"" << px(v) << "\" y=\"" << py(0) + 20
        << "\" font-size=\"12\" text-anchor=\"middle\">" << v << "</text>\n";
    svg << "  <text x=\"" << px(0) - 10 << "\" y=\"" << py(v) + 4
        << "\" font-size=\"12\" text-anchor=\"end\">" << v << "</text>\n";
  }
  svg << "  <rect x=\"" << px(0) << "\" y=\"" << py(1) << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "  <text x=\"" << kW / 2 << "\" y=\"" << kH - 15
      << "\" font-size=\"14\" text-anchor=\"middle\">Recall</text>\n";
  svg << "  <text x=\"18\" y=\"" << kH / 2
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << kH / 2
      << ")\">Precision</text>\n";

  std::vector<PrPoint> pts = curve;
  std::sort(pts.begin(), pts.end(),
            [](const PrPoint& a, const PrPoint& b) { return a.recall < b.recall; });
  svg << "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (const auto& p : pts) svg << px(p.recall) << "," << py(p.precision) << " ";
  svg << "\"/>\n";

  svg << "  <circle cx=\"" << px(best.recall) << "\" cy=\"" << py(best.precision)
      << "\" r=\"5\" fill=\"#d62728\"/>\n";
  char label[96];
  std::snprintf(label, sizeof(label), "best F1 = %.3f @ Th = %.3f", best.f1, best.threshold);
  svg << "  <text x=\"" << px(best.recall) + 10 << "\" y=\"" << py(best.precision) - 8
      << "\" font-size=\"12\">" << label << "</text>\n";
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw DataError("cannot write SVG plot: " + path.string());
  out << svg.str();
}

void write_predictions(const std::filesystem::path& path,
                       const std::vector<FramePrediction>& preds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions: " + path.string());
  out << "frame_index,camera_id,x_pred_norm,confidence\n";
  for (const auto& p : preds) {
    out << p.frame_index << "," << p.camera_id << "," << format_double(p.x_pred_norm) << ","
        << format_double(p.confidence) << "\n";
  }
  if (!out) throw DataError("short write on predictions: " + path.string());
}

std::vector<FramePrediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "frame_index,camera_id,x_pred_norm,confidence") {
    throw DataError("prediction file has an unexpected header: " + path.string());
  }
  std::vector<FramePrediction> preds;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 4) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 4 comma-separated fields");
    }
    try {
      FramePrediction p;
      p.frame_index = std::stoll(fields[0]);
      p.camera_id = std::stoi(fields[1]);
      p.x_pred_norm = std::stod(fields[2]);
      p.confidence = std::stod(fields[3]);
      preds.push_back(p);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed prediction row");
    }
  }
  return preds;
}

std::string format_report_row(const MetricsReport& report) {
  char row[160];
  if (std::isnan(report.ad_px)) {
    std::snprintf(row, sizeof(row), "DetErr %5.2f%%  aD    n/a        AP %5.1f%%  F1 %5.1f",
                  report.det_err * 100.0, report.ap * 100.0, report.f1_best.f1 * 100.0);
  } else {
    std::snprintf(row, sizeof(row), "DetErr %5.2f%%  aD %6.1fp,%5.2f°  AP %5.1f%%  F1 %5.1f",
                  report.det_err * 100.0, report.ad_px, report.ad_deg, report.ap * 100.0,
                  report.f1_best.f1 * 100.0);
  }
  return row;
}

}  // namespace asdl
