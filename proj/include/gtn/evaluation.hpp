#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtn/labels.hpp"
#include "gtn/postprocess.hpp"

namespace gtn {

/// Inclusive frame interval.
struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Per-class sorted, disjoint ground-truth runs.
using GroundTruthSegments = std::array<std::vector<Interval>, kNumClasses>;

GroundTruthSegments ground_truth_segments(const GroundTruthTrack& gt);

/// |a n b| / |a u b| in frames.
double temporal_iou(const Interval& a, const Interval& b);

/// All-point interpolated AP of single-class predictions against `gt`.
/// Predictions are ranked by confidence (start frame breaks ties) and each is
/// greedily matched to the unmatched GT interval of highest IoU >= threshold
/// (earliest GT on ties). Returns nullopt when there is neither GT nor a
/// prediction, 0 when only predictions exist.
std::optional<double> average_precision(const std::vector<SegmentPrediction>& preds, const std::vector<Interval>& gt,
                                        double iou_threshold);

inline constexpr std::array<double, 2> kIouThresholds = {0.5, 0.95};

struct VideoReport {
  std::string video_id;
  std::array<std::array<std::optional<double>, kNumClasses>, 2> class_ap{};  // [threshold][class]
  std::array<double, 2> map{};                                               // mAP@0.5, mAP@0.95
};

/// mAP at each threshold over classes that have ground truth.
VideoReport video_map(const std::string& video_id, const std::vector<SegmentPrediction>& preds,
                      const GroundTruthSegments& gt);

struct EvalReport {
  std::vector<VideoReport> videos;
  std::array<double, 2> mean_map{};  // unweighted mean over videos
  double overall = 0;                // mean of the two dataset mAPs
};

EvalReport aggregate(const std::vector<VideoReport>& videos);

/// Frame-level AP per class (ranking frames by probability, tied scores
/// share a threshold); nullopt for classes with no positive frame.
std::array<std::optional<double>, kNumClasses> frame_ap(const Matrix& probs, const GroundTruthTrack& gt);

/// Mean of frame_ap over classes with at least one positive frame.
double frame_map(const Matrix& probs, const GroundTruthTrack& gt);

nlohmann::ordered_json report_to_json(const EvalReport& report);

/// Plain-text table: one row per video plus the average and overall score.
std::string format_report_table(const EvalReport& report);

}  // namespace gtn
