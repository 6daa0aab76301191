#include <doctest.h>

#include <cmath>
#include <fstream>

#include "gtn/datasynth.hpp"
#include "gtn/error.hpp"
#include "gtn/rng.hpp"
#include "gtn/windows.hpp"
#include "test_util.hpp"

using namespace gtn;
using gtn::test::TempDir;

namespace {

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.frames = 600;
  cfg.seed = seed;
  cfg.cls_dim = 6;
  cfg.patch_dim = 5;
  return cfg;
}

// Number of maximal runs of each pathology bit, summed over classes.
std::size_t count_runs(const GroundTruthTrack& gt) {
  std::size_t runs = 0;
  for (std::size_t p = 0; p < kNumPathology; ++p) {
    for (std::size_t t = 0; t < gt.frames(); ++t) {
      if (gt.pathology[t][p] && (t == 0 || !gt.pathology[t - 1][p])) ++runs;
    }
  }
  return runs;
}

Errc error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::io;
}

}  // namespace

TEST_CASE("noise-free video without bursts reproduces the prototypes") {
  SynthConfig cfg = small_config(3);
  cfg.noise_sigma = 0;
  cfg.burst_rate = 0;
  const SynthVideo v = synth_video(cfg);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    for (std::size_t j = 0; j < cfg.patch_dim; ++j) {
      CHECK(v.features.patch(t, j) == v.prototypes(v.truth.anatomy[t], j));
    }
    CHECK(v.truth.healthy(t));
  }
}

TEST_CASE("same seed gives bitwise identical videos") {
  const SynthConfig cfg = small_config(4);
  const SynthVideo a = synth_video(cfg);
  const SynthVideo b = synth_video(cfg);
  CHECK(a.features.cls == b.features.cls);
  CHECK(a.features.patch == b.features.patch);
  CHECK(a.truth == b.truth);
  CHECK(a.prototypes == b.prototypes);
  CHECK(a.lesion_offsets == b.lesion_offsets);
  SynthConfig other = cfg;
  other.seed = 5;
  CHECK_FALSE(synth_video(other).features.patch == a.features.patch);
}

TEST_CASE("burst count matches an independent replay of the burst stream") {
  SynthConfig cfg;
  cfg.frames = 10000;
  cfg.seed = 7;
  cfg.burst_rate = 2.0;
  cfg.cls_dim = 2;
  cfg.patch_dim = 2;
  const SynthVideo v = synth_video(cfg);

  // Replay: first non-mouth frame, then gap / length / class per burst.
  std::size_t mouth = 0;
  while (v.truth.anatomy[mouth] == 0) ++mouth;
  Rng rng(cfg.seed, synth_stream::bursts);
  std::size_t pos = mouth, kept = 0;
  for (;;) {
    const double gap = std::floor(-std::log(1.0 - rng.uniform()) / (cfg.burst_rate / 1000.0));
    const std::size_t len = cfg.burst_min + static_cast<std::size_t>(rng.uniform() * double(cfg.burst_max - cfg.burst_min + 1));
    rng.uniform();  // class
    if (double(pos) + gap >= double(cfg.frames)) break;
    const std::size_t start = pos + std::size_t(gap);
    const std::size_t end = std::min(start + len, cfg.frames) - 1;
    if (end - start + 1 >= cfg.burst_min) ++kept;
    pos = end + 1 + cfg.burst_gap;
  }
  CHECK(kept > 5);
  CHECK(count_runs(v.truth) == kept);
}

TEST_CASE("lesion frames carry their offset") {
  SynthConfig cfg = small_config(8);
  cfg.noise_sigma = 0;
  cfg.burst_rate = 10;
  const SynthVideo v = synth_video(cfg);
  std::size_t lesion_frames = 0;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    for (std::size_t j = 0; j < cfg.patch_dim; ++j) {
      double expect = v.prototypes(v.truth.anatomy[t], j);
      for (std::size_t p = 0; p < kNumPathology; ++p)
        if (v.truth.pathology[t][p]) expect += v.lesion_offsets(p, j);
      CHECK(v.features.patch(t, j) == doctest::Approx(expect).epsilon(1e-5));
    }
    lesion_frames += !v.truth.healthy(t);
  }
  CHECK(lesion_frames > 0);
  // Per-dimension RMS of each offset equals the configured magnitude.
  for (std::size_t p = 0; p < kNumPathology; ++p) {
    double ss = 0;
    for (std::size_t j = 0; j < cfg.patch_dim; ++j) ss += double(v.lesion_offsets(p, j)) * v.lesion_offsets(p, j);
    CHECK(std::sqrt(ss / double(cfg.patch_dim)) == doctest::Approx(cfg.lesion_magnitude).epsilon(1e-5));
  }
}

TEST_CASE("property: anatomy tracks are monotone and visit every organ") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthConfig cfg = small_config(seed);
    cfg.frames = 8 + seed * 3;
    cfg.organ_concentration = 0.3 + 0.05 * double(seed % 20);
    const SynthVideo v = synth_video(cfg);
    CHECK_NOTHROW(validate(v.truth));
    std::array<bool, kNumAnatomy> seen{};
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      if (t > 0) CHECK(v.truth.anatomy[t] >= v.truth.anatomy[t - 1]);
      seen[v.truth.anatomy[t]] = true;
    }
    for (bool s : seen) CHECK(s);
    // No burst touches the mouth.
    for (std::size_t t = 0; t < cfg.frames && v.truth.anatomy[t] == 0; ++t) CHECK(v.truth.healthy(t));
  }
}

TEST_CASE("organ durations respect the minimum and sum to T") {
  SynthConfig cfg = small_config(9);
  cfg.frames = 1000;
  cfg.min_organ_frames = 40;
  const auto dur = draw_organ_durations(cfg);
  std::size_t sum = 0;
  for (auto d : dur) {
    CHECK(d >= 40);
    sum += d;
  }
  CHECK(sum == 1000);
}

TEST_CASE("invalid synth configs are rejected") {
  SynthConfig cfg = small_config(1);
  cfg.frames = 7;
  CHECK(error_code([&] { synth_video(cfg); }) == Errc::invalid_argument);
  cfg = small_config(1);
  cfg.burst_min = 50;
  cfg.burst_max = 10;
  CHECK(error_code([&] { synth_video(cfg); }) == Errc::invalid_argument);
  cfg = small_config(1);
  cfg.noise_sigma = -1;
  CHECK(error_code([&] { synth_video(cfg); }) == Errc::invalid_argument);
}

TEST_CASE("dataset round trip") {
  TempDir dir("ds");
  const SynthVideo v = synth_video(small_config(10));
  write_dataset(dir.path(), v.features, v.truth, 10);
  const Dataset back = read_dataset(dir.path());
  CHECK(back.truth == v.truth);
  CHECK(back.features.cls == v.features.cls);
  CHECK(back.features.patch == v.features.patch);
  CHECK(back.features.video_id == v.features.video_id);
  CHECK(back.meta.seed == 10);
}

TEST_CASE("labels with one row too few are a mismatch") {
  TempDir dir("ds_mismatch");
  const SynthVideo v = synth_video(small_config(11));
  write_dataset(dir.path(), v.features, v.truth);
  GroundTruthTrack shorter = v.truth;
  shorter.anatomy.pop_back();
  shorter.pathology.pop_back();
  write_labels_csv(dir / "labels.csv", shorter);
  CHECK(error_code([&] { read_dataset(dir.path()); }) == Errc::label_mismatch);
  std::filesystem::remove(dir / "cls.ten");
  CHECK(error_code([&] { read_dataset(dir.path()); }) == Errc::io);
}

TEST_CASE("minimal hand-written labels") {
  TempDir dir("labels");
  {
    std::ofstream f(dir / "labels.csv");
    f << "0,0,0,0,0,0,0,0,0,0,0\n1,1,0,0,0,0,0,0,0,0,0\n2,2,1,0,0,0,0,0,0,0,0\n";
  }
  const GroundTruthTrack gt = read_labels_csv(dir / "labels.csv");
  CHECK(gt.anatomy == std::vector<std::uint8_t>{0, 1, 2});
  CHECK(gt.pathology[2][0] == 1);
  CHECK_FALSE(gt.healthy(2));

  {
    std::ofstream f(dir / "bad.csv");
    f << "frame,anatomy,p0,p1,p2,p3,p4,p5,p6,p7,p8\n0,3,0,0,0,0,0,0,0,0,0\n1,2,0,0,0,0,0,0,0,0,0\n";
  }
  CHECK(error_code([&] { read_labels_csv(dir / "bad.csv"); }) == Errc::label_mismatch);
}

TEST_CASE("window plan examples") {
  CHECK(window_plan(10, 4, 2) == std::vector<Window>{{0, 4}, {2, 6}, {4, 8}, {6, 10}});
  CHECK(window_plan(3, 8, 4) == std::vector<Window>{{0, 3}});
  const auto plan = window_plan(10, 4, 3);
  CHECK(plan == std::vector<Window>{{0, 4}, {3, 7}, {6, 10}});
  // Brute-force coverage: for each frame count the windows holding it.
  std::vector<std::size_t> brute(10, 0);
  for (std::size_t t = 0; t < 10; ++t)
    for (const auto& w : plan) brute[t] += (w.start <= t && t < w.end) ? 1 : 0;
  CHECK(coverage(plan, 10) == brute);
  CHECK(error_code([] { window_plan(0, 4, 2); }) == Errc::invalid_argument);
}

TEST_CASE("property: window plans cover every frame") {
  Rng rng(20);
  for (int c = 0; c < 300; ++c) {
    const std::size_t T = 1 + rng.below(400);
    const std::size_t window = 1 + rng.below(64);
    const std::size_t stride = 1 + rng.below(window);
    const auto plan = window_plan(T, window, stride);
    REQUIRE_FALSE(plan.empty());
    CHECK(plan.front().start == 0);
    CHECK(plan.back().end == T);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      CHECK(plan[i].start == i * stride);
      CHECK(plan[i].length() <= window);
    }
    for (auto n : coverage(plan, T)) CHECK(n >= 1);
  }
}
