#include "gtn/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "gtn/error.hpp"
#include "gtn/rng.hpp"
#include "gtn/tensor_io.hpp"

namespace gtn {

void validate(const SynthConfig& cfg) {
  const std::size_t min_organ = std::max<std::size_t>(1, cfg.min_organ_frames);
  if (cfg.frames < kNumAnatomy * min_organ) {
    fail(Errc::invalid_argument, "frames=" + std::to_string(cfg.frames) + " cannot give each of 8 organs " +
                                     std::to_string(min_organ) + " frame(s)");
  }
  require(cfg.cls_dim >= 1 && cfg.patch_dim >= 1, Errc::invalid_argument, "feature dims must be >= 1");
  require(cfg.organ_concentration > 0, Errc::invalid_argument, "organ concentration must be > 0");
  require(cfg.burst_rate >= 0, Errc::invalid_argument, "burst rate must be >= 0");
  require(cfg.burst_min >= 1 && cfg.burst_min <= cfg.burst_max, Errc::invalid_argument,
          "burst length range must satisfy 1 <= min <= max");
  require(cfg.noise_sigma >= 0, Errc::invalid_argument, "noise sigma must be >= 0");
  require(cfg.lesion_magnitude >= 0, Errc::invalid_argument, "lesion magnitude must be >= 0");
}

std::array<std::size_t, kNumAnatomy> draw_organ_durations(const SynthConfig& cfg) {
  validate(cfg);
  const std::size_t min_organ = std::max<std::size_t>(1, cfg.min_organ_frames);
  Rng rng(cfg.seed, synth_stream::durations);
  std::array<double, kNumAnatomy> g{};
  for (auto& v : g) v = rng.gamma(cfg.organ_concentration);
  const double total = std::accumulate(g.begin(), g.end(), 0.0);

  const std::size_t spare = cfg.frames - kNumAnatomy * min_organ;
  std::array<std::size_t, kNumAnatomy> dur{};
  std::array<double, kNumAnatomy> frac{};
  std::size_t assigned = 0;
  for (std::size_t a = 0; a < kNumAnatomy; ++a) {
    const double share = total > 0 ? g[a] / total * static_cast<double>(spare) : 0.0;
    const auto whole = static_cast<std::size_t>(std::floor(share));
    dur[a] = min_organ + whole;
    frac[a] = share - static_cast<double>(whole);
    assigned += whole;
  }
  // Largest remainder, smaller organ index first on ties.
  std::array<std::size_t, kNumAnatomy> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return frac[x] > frac[y]; });
  for (std::size_t i = 0; assigned < spare; ++i, ++assigned) ++dur[order[i % kNumAnatomy]];
  return dur;
}

SynthVideo synth_video(const SynthConfig& cfg) {
  validate(cfg);
  const std::size_t T = cfg.frames;
  const std::size_t pd = cfg.patch_dim;
  const std::size_t cd = cfg.cls_dim;

  SynthVideo out;
  GroundTruthTrack& gt = out.truth;
  gt.anatomy.resize(T);
  gt.pathology.assign(T, {});

  const auto dur = draw_organ_durations(cfg);
  std::size_t t = 0;
  for (std::size_t a = 0; a < kNumAnatomy; ++a) {
    for (std::size_t i = 0; i < dur[a]; ++i) gt.anatomy[t++] = static_cast<std::uint8_t>(a);
  }

  {
    Rng rng(cfg.seed, synth_stream::bursts);
    std::size_t pos = dur[anatomy::mouth];
    const double rate = cfg.burst_rate / 1000.0;
    while (rate > 0) {
      const double gap = std::floor(rng.exponential(rate));
      const std::size_t length = cfg.burst_min + rng.below(cfg.burst_max - cfg.burst_min + 1);
      const std::size_t cls = rng.below(kNumPathology);
      if (static_cast<double>(pos) + gap >= static_cast<double>(T)) break;
      const std::size_t start = pos + static_cast<std::size_t>(gap);
      const std::size_t end = std::min(start + length, T) - 1;
      if (end - start + 1 >= cfg.burst_min) {
        for (std::size_t f = start; f <= end; ++f) gt.pathology[f][cls] = 1;
      }
      pos = end + 1 + cfg.burst_gap;
    }
  }

  std::vector<double> protos(kNumAnatomy * pd);
  {
    Rng rng(cfg.seed, synth_stream::prototypes);
    for (auto& v : protos) v = rng.normal();
  }
  std::vector<double> lesions(kNumPathology * pd);
  {
    Rng rng(cfg.seed, synth_stream::lesions);
    for (auto& v : lesions) v = rng.normal();
    for (std::size_t p = 0; p < kNumPathology; ++p) {
      double norm = 0;
      for (std::size_t j = 0; j < pd; ++j) norm += lesions[p * pd + j] * lesions[p * pd + j];
      const double scale = norm > 0 ? cfg.lesion_magnitude * std::sqrt(static_cast<double>(pd) / norm) : 0.0;
      for (std::size_t j = 0; j < pd; ++j) lesions[p * pd + j] *= scale;
    }
  }

  // Sparse random linear map patch -> cls: each cls coordinate mixes two
  // patch coordinates. Plus an organ-specific bias.
  std::vector<std::size_t> src_a(cd), src_b(cd);
  std::vector<double> coef_a(cd), coef_b(cd), organ_bias(kNumAnatomy * cd);
  {
    Rng rng(cfg.seed, synth_stream::cls_map);
    for (std::size_t j = 0; j < cd; ++j) {
      src_a[j] = rng.below(pd);
      src_b[j] = rng.below(pd);
      coef_a[j] = rng.normal() * std::sqrt(0.5);
      coef_b[j] = rng.normal() * std::sqrt(0.5);
    }
    for (auto& v : organ_bias) v = rng.normal();
  }

  Matrix patch(T, pd);
  Matrix cls(T, cd);
  {
    Rng rng(cfg.seed, synth_stream::noise);
    std::vector<double> frame(pd);
    for (std::size_t f = 0; f < T; ++f) {
      const std::size_t a = gt.anatomy[f];
      for (std::size_t j = 0; j < pd; ++j) {
        double v = protos[a * pd + j];
        if (cfg.noise_sigma > 0) v += cfg.noise_sigma * rng.normal();
        frame[j] = v;
      }
      for (std::size_t p = 0; p < kNumPathology; ++p) {
        if (!gt.pathology[f][p]) continue;
        for (std::size_t j = 0; j < pd; ++j) frame[j] += lesions[p * pd + j];
      }
      auto prow = patch.row(f);
      for (std::size_t j = 0; j < pd; ++j) prow[j] = static_cast<float>(frame[j]);
      auto crow = cls.row(f);
      for (std::size_t j = 0; j < cd; ++j) {
        double v = coef_a[j] * prow[src_a[j]] + coef_b[j] * prow[src_b[j]] + organ_bias[a * cd + j];
        if (cfg.noise_sigma > 0) v += cfg.noise_sigma * rng.normal();
        crow[j] = static_cast<float>(v);
      }
    }
  }

  out.features.video_id = cfg.video_id;
  out.features.cls = std::move(cls);
  out.features.patch = std::move(patch);
  out.prototypes = MatrixD(kNumAnatomy, pd, std::move(protos)).cast<float>();
  out.lesion_offsets = MatrixD(kNumPathology, pd, std::move(lesions)).cast<float>();
  return out;
}

void write_labels_csv(const std::filesystem::path& path, const GroundTruthTrack& gt) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(Errc::io, "cannot open for writing: " + path.string());
  f << "frame,anatomy";
  for (std::size_t p = 0; p < kNumPathology; ++p) f << ",p" << p;
  f << '\n';
  for (std::size_t t = 0; t < gt.frames(); ++t) {
    f << t << ',' << static_cast<int>(gt.anatomy[t]);
    for (auto b : gt.pathology[t]) f << ',' << static_cast<int>(b);
    f << '\n';
  }
  if (!f) fail(Errc::io, "write failed: " + path.string());
}

GroundTruthTrack read_labels_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::io, "cannot open: " + path.string());
  GroundTruthTrack gt;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!(line[0] >= '0' && line[0] <= '9')) {
      if (lineno == 1) continue;  // header
      fail(Errc::parse, path.string() + ":" + std::to_string(lineno) + ": unexpected text");
    }
    std::vector<long> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        fields.push_back(std::stol(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        fail(Errc::parse, path.string() + ":" + std::to_string(lineno) + ": bad integer '" + cell + "'");
      }
    }
    if (fields.size() != 2 + kNumPathology) {
      fail(Errc::parse, path.string() + ":" + std::to_string(lineno) + ": expected 11 fields");
    }
    if (fields[0] != static_cast<long>(gt.frames())) {
      fail(Errc::parse, path.string() + ":" + std::to_string(lineno) + ": frames must be listed 0,1,2,...");
    }
    if (fields[1] < 0 || fields[1] >= static_cast<long>(kNumAnatomy)) {
      fail(Errc::label_mismatch, path.string() + ":" + std::to_string(lineno) + ": anatomy index out of range");
    }
    gt.anatomy.push_back(static_cast<std::uint8_t>(fields[1]));
    std::array<std::uint8_t, kNumPathology> bits{};
    for (std::size_t p = 0; p < kNumPathology; ++p) {
      const long b = fields[2 + p];
      if (b != 0 && b != 1) fail(Errc::label_mismatch, path.string() + ":" + std::to_string(lineno) + ": non-binary label");
      bits[p] = static_cast<std::uint8_t>(b);
    }
    gt.pathology.push_back(bits);
  }
  validate(gt);
  return gt;
}

void write_dataset(const std::filesystem::path& dir, const FeatureSequence& seq, const GroundTruthTrack& gt,
                   std::uint64_t seed) {
  require(seq.cls.rows() == seq.patch.rows(), Errc::shape_mismatch, "cls/patch frame count mismatch");
  require(seq.cls.rows() == gt.frames(), Errc::label_mismatch, "feature/label frame count mismatch");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::io, "cannot create directory " + dir.string() + ": " + ec.message());
  save_tensor(dir / "cls.ten", seq.cls);
  save_tensor(dir / "patch.ten", seq.patch);
  write_labels_csv(dir / "labels.csv", gt);
  nlohmann::ordered_json meta;
  meta["video_id"] = seq.video_id;
  meta["frames"] = gt.frames();
  meta["seed"] = seed;
  meta["format_version"] = 1;
  std::ofstream f(dir / "meta.json", std::ios::trunc);
  if (!f) fail(Errc::io, "cannot write meta.json in " + dir.string());
  f << meta.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  const auto meta_path = dir / "meta.json";
  std::ifstream mf(meta_path);
  if (!mf) fail(Errc::io, "missing " + meta_path.string());
  try {
    const auto meta = nlohmann::json::parse(mf);
    ds.meta.video_id = meta.at("video_id").get<std::string>();
    ds.meta.frames = meta.at("frames").get<std::size_t>();
    ds.meta.seed = meta.value("seed", std::uint64_t{0});
    ds.meta.format_version = meta.value("format_version", 1);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, meta_path.string() + ": " + e.what());
  }
  ds.features.video_id = ds.meta.video_id;
  ds.features.cls = load_tensor<float>(dir / "cls.ten");
  ds.features.patch = load_tensor<float>(dir / "patch.ten");
  ds.truth = read_labels_csv(dir / "labels.csv");
  const std::size_t T = ds.features.cls.rows();
  if (ds.features.patch.rows() != T) fail(Errc::shape_mismatch, "cls.ten and patch.ten frame counts differ");
  if (ds.truth.frames() != T) {
    fail(Errc::label_mismatch, "labels.csv has " + std::to_string(ds.truth.frames()) + " rows but features have " +
                                   std::to_string(T) + " frames");
  }
  if (ds.meta.frames != T) fail(Errc::label_mismatch, "meta.json frame count disagrees with features");
  return ds;
}

}  // namespace gtn
