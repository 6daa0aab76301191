#include "gtn/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "gtn/error.hpp"

namespace gtn {

GroundTruthSegments ground_truth_segments(const GroundTruthTrack& gt) {
  GroundTruthSegments out;
  for (const auto& s : truth_segments(gt)) out[s.class_id].push_back({s.start, s.end});
  return out;
}

double temporal_iou(const Interval& a, const Interval& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  if (lo > hi) return 0.0;
  const double inter = static_cast<double>(hi - lo + 1);
  const double uni = static_cast<double>(a.end - a.start + 1) + static_cast<double>(b.end - b.start + 1) - inter;
  return inter / uni;
}

std::optional<double> average_precision(const std::vector<SegmentPrediction>& preds, const std::vector<Interval>& gt,
                                        double iou_threshold) {
  for (const auto& p : preds) {
    if (p.class_id != preds.front().class_id) fail(Errc::invalid_argument, "average_precision: mixed classes");
  }
  if (gt.empty()) return preds.empty() ? std::nullopt : std::optional<double>(0.0);
  if (preds.empty()) return 0.0;

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].confidence != preds[b].confidence) return preds[a].confidence > preds[b].confidence;
    return preds[a].start < preds[b].start;
  });

  std::vector<bool> taken(gt.size(), false);
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& p = preds[order[rank]];
    const Interval pi{p.start, p.end};
    double best = -1;
    std::size_t arg = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (taken[g]) continue;
      const double iou = temporal_iou(pi, gt[g]);
      if (iou >= iou_threshold && iou > best) {
        best = iou;
        arg = g;
      }
    }
    if (arg < gt.size()) {
      taken[arg] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gt.size()));
  }
  for (std::size_t i = precision.size() - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0;
  double prev_recall = 0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

VideoReport video_map(const std::string& video_id, const std::vector<SegmentPrediction>& preds,
                      const GroundTruthSegments& gt) {
  std::array<std::vector<SegmentPrediction>, kNumClasses> by_class;
  for (const auto& p : preds) {
    require(p.class_id < kNumClasses, Errc::invalid_argument, "video_map: class id out of range");
    by_class[p.class_id].push_back(p);
  }
  VideoReport rep;
  rep.video_id = video_id;
  for (std::size_t k = 0; k < kIouThresholds.size(); ++k) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      rep.class_ap[k][c] = average_precision(by_class[c], gt[c], kIouThresholds[k]);
      if (!gt[c].empty()) {
        sum += *rep.class_ap[k][c];
        ++n;
      }
    }
    rep.map[k] = n ? sum / static_cast<double>(n) : 0.0;
  }
  return rep;
}

EvalReport aggregate(const std::vector<VideoReport>& videos) {
  require(!videos.empty(), Errc::invalid_argument, "aggregate: no videos");
  EvalReport rep;
  rep.videos = videos;
  for (std::size_t k = 0; k < 2; ++k) {
    double s = 0;
    for (const auto& v : videos) s += v.map[k];
    rep.mean_map[k] = s / static_cast<double>(videos.size());
  }
  rep.overall = (rep.mean_map[0] + rep.mean_map[1]) / 2.0;
  return rep;
}

std::array<std::optional<double>, kNumClasses> frame_ap(const Matrix& probs, const GroundTruthTrack& gt) {
  require(probs.rows() == gt.frames() && probs.cols() == kNumClasses, Errc::shape_mismatch,
          "frame_ap: expected T x 17 probabilities");
  const Matrix labels = label_matrix(gt);
  const std::size_t T = probs.rows();
  std::array<std::optional<double>, kNumClasses> out{};
  std::vector<std::size_t> order(T);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t positives = 0;
    for (std::size_t t = 0; t < T; ++t) positives += labels(t, c) > 0.5f;
    if (positives == 0) continue;
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs(a, c) > probs(b, c); });
    double ap = 0;
    double prev_recall = 0;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < T;) {
      // Tied scores form one threshold step.
      const float score = probs(order[i], c);
      while (i < T && probs(order[i], c) == score) tp += labels(order[i++], c) > 0.5f;
      const double recall = static_cast<double>(tp) / static_cast<double>(positives);
      ap += (recall - prev_recall) * static_cast<double>(tp) / static_cast<double>(i);
      prev_recall = recall;
    }
    out[c] = ap;
  }
  return out;
}

double frame_map(const Matrix& probs, const GroundTruthTrack& gt) {
  double s = 0;
  std::size_t n = 0;
  for (const auto& ap : frame_ap(probs, gt)) {
    if (ap) {
      s += *ap;
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  auto videos = nlohmann::ordered_json::array();
  for (const auto& v : report.videos) {
    nlohmann::ordered_json jv;
    jv["video_id"] = v.video_id;
    jv["map@0.5"] = v.map[0];
    jv["map@0.95"] = v.map[1];
    auto classes = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      nlohmann::ordered_json jc;
      jc["class_id"] = c;
      jc["class_name"] = class_name(c);
      jc["ap@0.5"] = v.class_ap[0][c] ? nlohmann::ordered_json(*v.class_ap[0][c]) : nlohmann::ordered_json(nullptr);
      jc["ap@0.95"] = v.class_ap[1][c] ? nlohmann::ordered_json(*v.class_ap[1][c]) : nlohmann::ordered_json(nullptr);
      classes.push_back(std::move(jc));
    }
    jv["classes"] = std::move(classes);
    videos.push_back(std::move(jv));
  }
  j["videos"] = std::move(videos);
  j["average"] = {{"map@0.5", report.mean_map[0]}, {"map@0.95", report.mean_map[1]}};
  j["overall"] = report.overall;
  return j;
}

std::string format_report_table(const EvalReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s | %-8s | %-8s\n", "Video", "mAP@0.5", "mAP@0.95");
  out += line;
  out += std::string(46, '-') + "\n";
  for (const auto& v : report.videos) {
    std::snprintf(line, sizeof line, "%-24s | %8.4f | %8.4f\n", v.video_id.c_str(), v.map[0], v.map[1]);
    out += line;
  }
  out += std::string(46, '-') + "\n";
  std::snprintf(line, sizeof line, "%-24s | %8.4f | %8.4f\n",
                ("Average (" + std::to_string(report.videos.size()) + " videos)").c_str(), report.mean_map[0],
                report.mean_map[1]);
  out += line;
  std::snprintf(line, sizeof line, "%-24s | %19.4f\n", "Overall Score", report.overall);
  out += line;
  return out;
}

}  // namespace gtn
