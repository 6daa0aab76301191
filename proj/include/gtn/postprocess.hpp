#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gtn/labels.hpp"
#include "gtn/windows.hpp"

namespace gtn {

// Frame probability tracks are T x 17 matrices: anatomy columns 0-7 then
// pathology columns 8-16, values in [0, 1].

struct SegmentPrediction {
  std::size_t class_id = 0;  // 0-16
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  double confidence = 0;

  std::size_t length() const { return end - start + 1; }
  friend bool operator==(const SegmentPrediction&, const SegmentPrediction&) = default;
};

struct ViterbiConfig {
  double skip_penalty = 5.0;  // log-domain cost per organ advanced
  double emission_floor = 1e-6;
};

struct PostprocessConfig {
  std::size_t median_kernel = 5;
  ViterbiConfig viterbi;
  std::uint64_t gate_min_count = 1;
  double threshold = 0.5;
  std::size_t min_segment = 20;
  std::size_t max_gap = 20;
};

void validate(const PostprocessConfig& cfg);

/// Anatomy x pathology frame counts from training labels.
class CoOccurrenceTable {
 public:
  void add(const GroundTruthTrack& gt);
  void set(std::size_t anatomy, std::size_t pathology, std::uint64_t count);

  bool fitted() const { return fitted_; }
  std::uint64_t count(std::size_t anatomy, std::size_t pathology) const { return counts_[anatomy][pathology]; }
  std::uint64_t row_total(std::size_t anatomy) const;

  friend bool operator==(const CoOccurrenceTable&, const CoOccurrenceTable&) = default;

 private:
  std::array<std::array<std::uint64_t, kNumPathology>, kNumAnatomy> counts_{};
  bool fitted_ = false;
};

/// 8 lines of 9 comma-separated counts.
void write_cooccurrence_csv(const std::filesystem::path& path, const CoOccurrenceTable& table);
CoOccurrenceTable read_cooccurrence_csv(const std::filesystem::path& path);

/// Per-frame mean of sigmoid(logit) over the windows covering the frame.
Matrix merge_windows(const std::vector<Matrix>& window_logits, const std::vector<Window>& plan, std::size_t frames);

/// Column-wise median over [t - k/2, t + k/2] clipped to the track; even
/// counts at the edges take the mean of the two middle values.
Matrix median_filter(const Matrix& probs, std::size_t kernel = 5);

struct ViterbiResult {
  std::vector<std::uint8_t> path;
  double score = 0;
};

/// Best non-decreasing organ path under log emissions and a linear skip
/// penalty. Ties go to the smaller state index.
ViterbiResult viterbi_anatomy(const Matrix& anatomy_probs, const ViterbiConfig& cfg);

/// Zeroes pathology p on frame t when count(anatomy[t], p) < min_count and
/// replaces the anatomy columns with the decoded one-hot.
Matrix cooccurrence_gate(const Matrix& probs, const std::vector<std::uint8_t>& anatomy, const CoOccurrenceTable& table,
                         std::uint64_t min_count = 1);

/// Maximal runs with prob >= threshold; confidence is the run's mean.
std::vector<SegmentPrediction> extract_segments(std::span<const float> column, std::size_t class_id,
                                                double threshold = 0.5);
std::vector<SegmentPrediction> extract_segments(const Matrix& probs, std::size_t column, double threshold = 0.5);

std::vector<SegmentPrediction> min_segment_filter(const std::vector<SegmentPrediction>& segs, std::size_t min_len = 20);

/// Merges neighbouring anatomy segments (adjacent in start order, nothing
/// between them) of the same class when the uncovered gap is <= max_gap.
/// The merged confidence is the length-weighted mean of the parts.
std::vector<SegmentPrediction> anatomy_gap_fill(const std::vector<SegmentPrediction>& segs, std::size_t max_gap = 20);

struct PipelineResult {
  Matrix probs;  // T x 17 after gating (anatomy one-hot)
  std::vector<std::uint8_t> anatomy;
  std::vector<SegmentPrediction> segments;  // sorted by class, then start
};

/// median -> Viterbi -> gate -> segments -> min-segment filter -> gap fill.
PipelineResult postprocess_probs(const Matrix& merged, const CoOccurrenceTable& table, const PostprocessConfig& cfg);

/// merge_windows followed by postprocess_probs.
PipelineResult run_pipeline(const std::vector<Matrix>& window_logits, const std::vector<Window>& plan,
                            std::size_t frames, const CoOccurrenceTable& table, const PostprocessConfig& cfg);

/// Ground-truth runs as segments with confidence 1.
std::vector<SegmentPrediction> truth_segments(const GroundTruthTrack& gt);

/// CSV: video_id,class_id,class_name,start,end,confidence (6 decimals).
void write_segments_csv(const std::filesystem::path& path, const std::string& video_id,
                        const std::vector<SegmentPrediction>& segs);

struct VideoSegments {
  std::string video_id;
  std::vector<SegmentPrediction> segments;
};

/// Groups rows by video id in first-seen order.
std::vector<VideoSegments> read_segments_csv(const std::filesystem::path& path);

}  // namespace gtn
