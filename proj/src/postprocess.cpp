#include "gtn/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gtn/error.hpp"
#include "gtn/kernels.hpp"

namespace gtn {

void validate(const PostprocessConfig& cfg) {
  require(cfg.median_kernel % 2 == 1, Errc::invalid_argument, "median kernel must be odd");
  require(cfg.viterbi.skip_penalty >= 0, Errc::invalid_argument, "Viterbi skip penalty must be >= 0");
  require(cfg.viterbi.emission_floor > 0, Errc::invalid_argument, "Viterbi emission floor must be > 0");
  require(cfg.threshold > 0 && cfg.threshold < 1, Errc::invalid_argument, "segment threshold must be in (0, 1)");
  require(cfg.min_segment >= 1, Errc::invalid_argument, "min segment length must be >= 1");
}

void CoOccurrenceTable::add(const GroundTruthTrack& gt) {
  validate(gt);
  for (std::size_t t = 0; t < gt.frames(); ++t) {
    for (std::size_t p = 0; p < kNumPathology; ++p) counts_[gt.anatomy[t]][p] += gt.pathology[t][p];
  }
  fitted_ = true;
}

void CoOccurrenceTable::set(std::size_t anatomy, std::size_t pathology, std::uint64_t count) {
  require(anatomy < kNumAnatomy && pathology < kNumPathology, Errc::invalid_argument, "co-occurrence index out of range");
  counts_[anatomy][pathology] = count;
  fitted_ = true;
}

std::uint64_t CoOccurrenceTable::row_total(std::size_t anatomy) const {
  std::uint64_t s = 0;
  for (auto c : counts_[anatomy]) s += c;
  return s;
}

void write_cooccurrence_csv(const std::filesystem::path& path, const CoOccurrenceTable& table) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(Errc::io, "cannot open for writing: " + path.string());
  for (std::size_t a = 0; a < kNumAnatomy; ++a) {
    for (std::size_t p = 0; p < kNumPathology; ++p) f << (p ? "," : "") << table.count(a, p);
    f << '\n';
  }
}

CoOccurrenceTable read_cooccurrence_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::io, "cannot open: " + path.string());
  CoOccurrenceTable table;
  std::string line;
  std::size_t a = 0;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (a >= kNumAnatomy) fail(Errc::parse, path.string() + ": more than 8 rows");
    std::stringstream ss(line);
    std::string cell;
    std::size_t p = 0;
    while (std::getline(ss, cell, ',')) {
      if (p >= kNumPathology) fail(Errc::parse, path.string() + ": more than 9 columns");
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        table.set(a, p, v);
      } catch (const std::exception&) {
        fail(Errc::parse, path.string() + ": bad count '" + cell + "'");
      }
      ++p;
    }
    if (p != kNumPathology) fail(Errc::parse, path.string() + ": expected 9 columns");
    ++a;
  }
  if (a != kNumAnatomy) fail(Errc::parse, path.string() + ": expected 8 rows");
  return table;
}

Matrix merge_windows(const std::vector<Matrix>& window_logits, const std::vector<Window>& plan, std::size_t frames) {
  require(window_logits.size() == plan.size(), Errc::invalid_argument, "merge_windows: one logit block per window");
  require(!plan.empty(), Errc::invalid_argument, "merge_windows: empty plan");
  const std::size_t C = window_logits.front().cols();
  std::vector<double> sum(frames * C, 0.0);
  std::vector<std::size_t> count(frames, 0);
  for (std::size_t w = 0; w < plan.size(); ++w) {
    const Window& win = plan[w];
    const Matrix& z = window_logits[w];
    require(win.start <= win.end && win.end <= frames, Errc::invalid_argument, "merge_windows: window outside video");
    require(z.rows() == win.length() && z.cols() == C, Errc::shape_mismatch, "merge_windows: logit block shape");
    for (std::size_t i = 0; i < z.rows(); ++i) {
      const std::size_t t = win.start + i;
      ++count[t];
      for (std::size_t c = 0; c < C; ++c) sum[t * C + c] += static_cast<double>(sigmoid(z(i, c)));
    }
  }
  Matrix out(frames, C);
  for (std::size_t t = 0; t < frames; ++t) {
    if (count[t] == 0) fail(Errc::uncovered_frame, "merge_windows: frame " + std::to_string(t) + " not covered");
    for (std::size_t c = 0; c < C; ++c) out(t, c) = static_cast<float>(sum[t * C + c] / static_cast<double>(count[t]));
  }
  return out;
}

Matrix median_filter(const Matrix& probs, std::size_t kernel) {
  if (kernel % 2 == 0) fail(Errc::invalid_argument, "median_filter: kernel must be odd");
  const std::size_t T = probs.rows();
  const std::size_t half = kernel / 2;
  Matrix out(T, probs.cols());
  std::vector<float> buf;
  buf.reserve(kernel);
  for (std::size_t c = 0; c < probs.cols(); ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t lo = t > half ? t - half : 0;
      const std::size_t hi = std::min(T - 1, t + half);
      buf.clear();
      for (std::size_t u = lo; u <= hi; ++u) buf.push_back(probs(u, c));
      std::sort(buf.begin(), buf.end());
      const std::size_t n = buf.size();
      out(t, c) = n % 2 == 1 ? buf[n / 2] : static_cast<float>((static_cast<double>(buf[n / 2 - 1]) + buf[n / 2]) / 2.0);
    }
  }
  return out;
}

ViterbiResult viterbi_anatomy(const Matrix& probs, const ViterbiConfig& cfg) {
  const std::size_t T = probs.rows();
  require(T > 0, Errc::invalid_argument, "viterbi_anatomy: empty track");
  require(probs.cols() == kNumAnatomy, Errc::shape_mismatch, "viterbi_anatomy: expected T x 8 probabilities");
  constexpr std::size_t S = kNumAnatomy;
  const auto emit = [&](std::size_t t, std::size_t s) {
    const double p = probs(t, s);
    require(p >= 0, Errc::invalid_argument, "viterbi_anatomy: negative probability");
    return std::log(std::max(p, cfg.emission_floor));
  };
  std::vector<std::uint8_t> back(T * S, 0);
  std::array<double, S> score{};
  std::array<double, S> next{};
  for (std::size_t s = 0; s < S; ++s) score[s] = emit(0, s);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < S; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t i = 0; i <= j; ++i) {
        const double cand = score[i] + -cfg.skip_penalty * static_cast<double>(j - i);
        if (cand > best) {
          best = cand;
          arg = i;
        }
      }
      next[j] = best + emit(t, j);
      back[t * S + j] = static_cast<std::uint8_t>(arg);
    }
    score = next;
  }
  ViterbiResult res;
  std::size_t state = 0;
  for (std::size_t s = 1; s < S; ++s) {
    if (score[s] > score[state]) state = s;
  }
  res.score = score[state];
  res.path.resize(T);
  for (std::size_t t = T; t-- > 0;) {
    res.path[t] = static_cast<std::uint8_t>(state);
    state = back[t * S + state];
  }
  return res;
}

Matrix cooccurrence_gate(const Matrix& probs, const std::vector<std::uint8_t>& anatomy, const CoOccurrenceTable& table,
                         std::uint64_t min_count) {
  if (!table.fitted()) fail(Errc::invalid_argument, "cooccurrence_gate: table not fitted");
  require(probs.cols() == kNumClasses && anatomy.size() == probs.rows(), Errc::shape_mismatch,
          "cooccurrence_gate: expected T x 17 probabilities and T anatomy labels");
  Matrix out = probs;
  for (std::size_t t = 0; t < probs.rows(); ++t) {
    const std::size_t a = anatomy[t];
    require(a < kNumAnatomy, Errc::invalid_argument, "cooccurrence_gate: anatomy index out of range");
    for (std::size_t s = 0; s < kNumAnatomy; ++s) out(t, s) = s == a ? 1.0f : 0.0f;
    for (std::size_t p = 0; p < kNumPathology; ++p) {
      if (table.count(a, p) < min_count) out(t, kNumAnatomy + p) = 0.0f;
    }
  }
  return out;
}

std::vector<SegmentPrediction> extract_segments(std::span<const float> column, std::size_t class_id, double threshold) {
  std::vector<SegmentPrediction> segs;
  const std::size_t T = column.size();
  std::size_t t = 0;
  while (t < T) {
    if (!(column[t] >= threshold)) {
      ++t;
      continue;
    }
    const std::size_t start = t;
    double sum = 0;
    while (t < T && column[t] >= threshold) sum += column[t++];
    segs.push_back({class_id, start, t - 1, sum / static_cast<double>(t - start)});
  }
  return segs;
}

std::vector<SegmentPrediction> extract_segments(const Matrix& probs, std::size_t column, double threshold) {
  std::vector<float> col(probs.rows());
  for (std::size_t t = 0; t < probs.rows(); ++t) col[t] = probs(t, column);
  return extract_segments(col, column, threshold);
}

std::vector<SegmentPrediction> min_segment_filter(const std::vector<SegmentPrediction>& segs, std::size_t min_len) {
  require(min_len >= 1, Errc::invalid_argument, "min_segment_filter: min_len must be >= 1");
  std::vector<SegmentPrediction> out;
  std::copy_if(segs.begin(), segs.end(), std::back_inserter(out),
               [&](const SegmentPrediction& s) { return s.length() >= min_len; });
  return out;
}

std::vector<SegmentPrediction> anatomy_gap_fill(const std::vector<SegmentPrediction>& segs, std::size_t max_gap) {
  for (std::size_t i = 0; i < segs.size(); ++i) {
    require(segs[i].start <= segs[i].end, Errc::invalid_argument, "anatomy_gap_fill: segment start > end");
    if (i > 0 && segs[i].start <= segs[i - 1].end) {
      fail(Errc::overlapping_segments, "anatomy_gap_fill: segments must be sorted and non-overlapping");
    }
  }
  std::vector<SegmentPrediction> out;
  for (const auto& s : segs) {
    if (!out.empty()) {
      auto& prev = out.back();
      const std::size_t gap = s.start - prev.end - 1;
      if (prev.class_id == s.class_id && gap <= max_gap) {
        const double la = static_cast<double>(prev.length());
        const double lb = static_cast<double>(s.length());
        prev.confidence = (prev.confidence * la + s.confidence * lb) / (la + lb);
        prev.end = s.end;
        continue;
      }
    }
    out.push_back(s);
  }
  return out;
}

PipelineResult postprocess_probs(const Matrix& merged, const CoOccurrenceTable& table, const PostprocessConfig& cfg) {
  validate(cfg);
  require(merged.cols() == kNumClasses && merged.rows() > 0, Errc::shape_mismatch,
          "postprocess: expected a non-empty T x 17 probability track");
  const std::size_t T = merged.rows();
  const Matrix smooth = median_filter(merged, cfg.median_kernel);

  Matrix anat(T, kNumAnatomy);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t a = 0; a < kNumAnatomy; ++a) anat(t, a) = smooth(t, a);
  }
  PipelineResult res;
  res.anatomy = viterbi_anatomy(anat, cfg.viterbi).path;
  res.probs = cooccurrence_gate(smooth, res.anatomy, table, cfg.gate_min_count);

  std::vector<SegmentPrediction> anat_segs;
  for (std::size_t t = 0; t < T;) {
    const std::size_t a = res.anatomy[t];
    const std::size_t start = t;
    double sum = 0;
    while (t < T && res.anatomy[t] == a) sum += anat(t++, a);
    anat_segs.push_back({a, start, t - 1, sum / static_cast<double>(t - start)});
  }
  anat_segs = anatomy_gap_fill(min_segment_filter(anat_segs, cfg.min_segment), cfg.max_gap);

  std::vector<SegmentPrediction> segs = anat_segs;
  for (std::size_t p = 0; p < kNumPathology; ++p) {
    auto found = min_segment_filter(extract_segments(res.probs, kNumAnatomy + p, cfg.threshold), cfg.min_segment);
    segs.insert(segs.end(), found.begin(), found.end());
  }
  std::stable_sort(segs.begin(), segs.end(), [](const SegmentPrediction& a, const SegmentPrediction& b) {
    return a.class_id != b.class_id ? a.class_id < b.class_id : a.start < b.start;
  });
  res.segments = std::move(segs);
  return res;
}

PipelineResult run_pipeline(const std::vector<Matrix>& window_logits, const std::vector<Window>& plan,
                            std::size_t frames, const CoOccurrenceTable& table, const PostprocessConfig& cfg) {
  return postprocess_probs(merge_windows(window_logits, plan, frames), table, cfg);
}

std::vector<SegmentPrediction> truth_segments(const GroundTruthTrack& gt) {
  const Matrix labels = label_matrix(gt);
  std::vector<SegmentPrediction> segs;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto found = extract_segments(labels, c, 0.5);
    segs.insert(segs.end(), found.begin(), found.end());
  }
  return segs;
}

void write_segments_csv(const std::filesystem::path& path, const std::string& video_id,
                        const std::vector<SegmentPrediction>& segs) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(Errc::io, "cannot open for writing: " + path.string());
  f << "video_id,class_id,class_name,start,end,confidence\n";
  char conf[32];
  for (const auto& s : segs) {
    std::snprintf(conf, sizeof conf, "%.6f", s.confidence);
    f << video_id << ',' << s.class_id << ',' << class_name(s.class_id) << ',' << s.start << ',' << s.end << ','
      << conf << '\n';
  }
  if (!f) fail(Errc::io, "write failed: " + path.string());
}

std::vector<VideoSegments> read_segments_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::io, "cannot open: " + path.string());
  std::vector<VideoSegments> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("video_id,", 0) == 0)) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) fail(Errc::parse, path.string() + ":" + std::to_string(lineno) + ": expected 6 fields");
    SegmentPrediction s;
    try {
      s.class_id = std::stoul(cells[1]);
      s.start = std::stoul(cells[3]);
      s.end = std::stoul(cells[4]);
      s.confidence = std::stod(cells[5]);
    } catch (const std::exception&) {
      fail(Errc::parse, path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    if (s.class_id >= kNumClasses || s.start > s.end) {
      fail(Errc::parse, path.string() + ":" + std::to_string(lineno) + ": invalid segment");
    }
    auto it = std::find_if(out.begin(), out.end(), [&](const VideoSegments& v) { return v.video_id == cells[0]; });
    if (it == out.end()) {
      out.push_back({cells[0], {}});
      it = out.end() - 1;
    }
    it->segments.push_back(s);
  }
  return out;
}

}  // namespace gtn
