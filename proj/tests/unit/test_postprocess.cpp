#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "gtn/datasynth.hpp"
#include "gtn/error.hpp"
#include "gtn/kernels.hpp"
#include "gtn/postprocess.hpp"
#include "test_util.hpp"

using namespace gtn;
using gtn::test::random_matrix;
using gtn::test::TempDir;

namespace {

Matrix uniform_probs(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = static_cast<float>(rng.uniform());
  return m;
}

// Scores every one of the 8^T sequences; returns the best monotone one
// (first found in lexicographic order on ties).
ViterbiResult brute_force_viterbi(const Matrix& probs, const ViterbiConfig& cfg) {
  const std::size_t T = probs.rows();
  std::size_t total = 1;
  for (std::size_t t = 0; t < T; ++t) total *= 8;
  ViterbiResult best;
  best.score = -std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> path(T);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (std::size_t t = T; t-- > 0;) {
      path[t] = static_cast<std::uint8_t>(rest % 8);
      rest /= 8;
    }
    double score = std::log(std::max<double>(probs(0, path[0]), cfg.emission_floor));
    bool ok = true;
    for (std::size_t t = 1; t < T && ok; ++t) {
      if (path[t] < path[t - 1]) {
        ok = false;
        break;
      }
      score = score + -cfg.skip_penalty * double(path[t] - path[t - 1]);
      score = score + std::log(std::max<double>(probs(t, path[t]), cfg.emission_floor));
    }
    if (ok && score > best.score) {
      best.score = score;
      best.path = path;
    }
  }
  return best;
}

float sort_median(std::vector<float> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : static_cast<float>((double(v[n / 2 - 1]) + v[n / 2]) / 2.0);
}

CoOccurrenceTable permissive_table() {
  CoOccurrenceTable table;
  for (std::size_t a = 0; a < kNumAnatomy; ++a)
    for (std::size_t p = 0; p < kNumPathology; ++p) table.set(a, p, 5);
  return table;
}

SegmentPrediction seg(std::size_t cls, std::size_t start, std::size_t end, double conf = 1.0) {
  return {cls, start, end, conf};
}

}  // namespace

TEST_CASE("merge windows") {
  Rng rng(1);
  const Matrix z = random_matrix(rng, 6, 3);
  const Matrix single = merge_windows({z}, {{0, 6}}, 6);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(single.values()[i] == sigmoid(z.values()[i]));

  const Matrix a(1, 1, static_cast<float>(std::log(0.2 / 0.8)));
  const Matrix b(1, 1, static_cast<float>(std::log(0.8 / 0.2)));
  CHECK(merge_windows({a, b}, {{0, 1}, {0, 1}}, 1)(0, 0) == doctest::Approx(0.5).epsilon(1e-7));

  const std::vector<Window> plan{{0, 4}, {2, 6}};
  CHECK(coverage(plan, 6) == std::vector<std::size_t>{1, 1, 2, 2, 1, 1});
  const Matrix z1 = random_matrix(rng, 4, 2), z2 = random_matrix(rng, 4, 2);
  const Matrix m = merge_windows({z1, z2}, plan, 6);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t c = 0; c < 2; ++c) {
      double sum = 0;
      int n = 0;
      if (t < 4) sum += 1 / (1 + std::exp(-double(z1(t, c)))), ++n;
      if (t >= 2) sum += 1 / (1 + std::exp(-double(z2(t - 2, c)))), ++n;
      CHECK(m(t, c) == doctest::Approx(sum / n).epsilon(1e-6));
    }

  try {
    merge_windows({z1}, {{0, 4}}, 6);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::uncovered_frame);
  }
}

TEST_CASE("property: merged probabilities lie in [0, 1] and equal sigmoid where covered once") {
  Rng rng(2);
  for (int c = 0; c < 100; ++c) {
    const std::size_t T = 1 + rng.below(60), window = 1 + rng.below(20), stride = 1 + rng.below(window);
    const auto plan = window_plan(T, window, stride);
    std::vector<Matrix> logits;
    for (const auto& w : plan) logits.push_back(random_matrix(rng, w.length(), 3, 5.0));
    const Matrix m = merge_windows(logits, plan, T);
    const auto cover = coverage(plan, T);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(m(t, k) >= 0.0f);
        CHECK(m(t, k) <= 1.0f);
      }
    for (std::size_t w = 0; w < plan.size(); ++w)
      for (std::size_t i = 0; i < plan[w].length(); ++i) {
        const std::size_t t = plan[w].start + i;
        if (cover[t] != 1) continue;
        for (std::size_t k = 0; k < 3; ++k) CHECK(m(t, k) == sigmoid(logits[w](i, k)));
      }
  }
}

TEST_CASE("median filter") {
  const Matrix flat(7, 2, 0.3f);
  CHECK(median_filter(flat) == flat);
  const Matrix spike(5, 1, {0, 0, 1, 0, 0});
  CHECK(median_filter(spike) == Matrix(5, 1));

  Rng rng(3);
  const Matrix col = uniform_probs(rng, 20, 1);
  const Matrix got = median_filter(col, 5);
  for (std::size_t t = 0; t < 20; ++t) {
    std::vector<float> win;
    for (long u = long(t) - 2; u <= long(t) + 2; ++u)
      if (u >= 0 && u < 20) win.push_back(col(std::size_t(u), 0));
    CHECK(got(t, 0) == sort_median(win));
  }
  CHECK_THROWS_AS(median_filter(col, 4), Error);
}

TEST_CASE("property: median filter is idempotent on runs of at least three") {
  Rng rng(4);
  for (int c = 0; c < 100; ++c) {
    std::vector<float> col;
    while (col.size() < 40) {
      const std::size_t run = 3 + rng.below(6);
      const float v = static_cast<float>(rng.uniform());
      col.insert(col.end(), run, v);
    }
    const Matrix m(col.size(), 1, col);
    CHECK(median_filter(m) == m);
    const Matrix once = median_filter(uniform_probs(rng, 30, 2));
    CHECK(once.rows() == 30);
  }
}

TEST_CASE("viterbi") {
  const ViterbiConfig cfg;
  const std::vector<std::uint8_t> truth{0, 0, 1, 3, 3, 4};
  Matrix onehot(truth.size(), 8);
  for (std::size_t t = 0; t < truth.size(); ++t) onehot(t, truth[t]) = 1.0f;
  CHECK(viterbi_anatomy(onehot, cfg).path == truth);

  Matrix one(1, 8, 0.1f);
  one(0, 5) = 0.4f;
  CHECK(viterbi_anatomy(one, cfg).path == std::vector<std::uint8_t>{5});
  const Matrix tied(1, 8, 0.125f);
  CHECK(viterbi_anatomy(tied, cfg).path == std::vector<std::uint8_t>{0});

  Rng rng(5);
  const Matrix probs = uniform_probs(rng, 6, 8);
  const ViterbiResult dp = viterbi_anatomy(probs, cfg);
  const ViterbiResult brute = brute_force_viterbi(probs, cfg);
  CHECK(dp.score == brute.score);
  CHECK(dp.path == brute.path);
  CHECK_THROWS_AS(viterbi_anatomy(Matrix(0, 8), cfg), Error);
}

TEST_CASE("property: viterbi equals exhaustive enumeration and is monotone") {
  Rng rng(6);
  for (int c = 0; c < 100; ++c) {
    ViterbiConfig cfg;
    cfg.skip_penalty = rng.uniform(0, 8);
    const std::size_t T = 1 + rng.below(5);
    const Matrix probs = uniform_probs(rng, T, 8);
    const ViterbiResult dp = viterbi_anatomy(probs, cfg);
    const ViterbiResult brute = brute_force_viterbi(probs, cfg);
    CHECK(dp.score == brute.score);
    CHECK(dp.path == brute.path);
  }
  for (int c = 0; c < 100; ++c) {
    const Matrix probs = uniform_probs(rng, 1 + rng.below(300), 8);
    const auto path = viterbi_anatomy(probs, {}).path;
    CHECK(std::is_sorted(path.begin(), path.end()));
  }
}

TEST_CASE("co-occurrence gate") {
  CoOccurrenceTable table = permissive_table();
  table.set(anatomy::mouth, pathology::polyp, 0);
  Rng rng(7);
  const Matrix probs = uniform_probs(rng, 4, 17);
  const std::vector<std::uint8_t> organs{0, 0, 1, 1};
  const Matrix gated = cooccurrence_gate(probs, organs, table);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t a = 0; a < 8; ++a) CHECK(gated(t, a) == (a == organs[t] ? 1.0f : 0.0f));
    for (std::size_t p = 0; p < 9; ++p) {
      const bool killed = organs[t] == 0 && p == pathology::polyp;
      CHECK(gated(t, 8 + p) == (killed ? 0.0f : probs(t, 8 + p)));
    }
  }
  const Matrix open = cooccurrence_gate(probs, organs, permissive_table());
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t p = 8; p < 17; ++p) CHECK(open(t, p) == probs(t, p));

  CHECK_THROWS_AS(cooccurrence_gate(probs, organs, CoOccurrenceTable{}), Error);
}

TEST_CASE("gate against a per-frame lookup on a fitted table") {
  SynthConfig cfg;
  cfg.frames = 2000;
  cfg.seed = 8;
  cfg.cls_dim = 2;
  cfg.patch_dim = 2;
  cfg.burst_rate = 4;
  const SynthVideo train = synth_video(cfg);
  CoOccurrenceTable table;
  table.add(train.truth);
  // Direct count of the same statistic.
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t p = 0; p < 9; ++p) {
      std::uint64_t n = 0;
      for (std::size_t t = 0; t < cfg.frames; ++t) n += train.truth.anatomy[t] == a && train.truth.pathology[t][p];
      CHECK(table.count(a, p) == n);
    }
  cfg.seed = 9;
  const SynthVideo test = synth_video(cfg);
  Rng rng(10);
  const Matrix probs = uniform_probs(rng, cfg.frames, 17);
  const Matrix gated = cooccurrence_gate(probs, test.truth.anatomy, table, 3);
  for (std::size_t t = 0; t < cfg.frames; ++t)
    for (std::size_t p = 0; p < 9; ++p) {
      const bool keep = table.count(test.truth.anatomy[t], p) >= 3;
      CHECK(gated(t, 8 + p) == (keep ? probs(t, 8 + p) : 0.0f));
    }
}

TEST_CASE("property: the gate never raises a pathology probability") {
  Rng rng(11);
  for (int c = 0; c < 100; ++c) {
    CoOccurrenceTable table;
    for (std::size_t a = 0; a < 8; ++a)
      for (std::size_t p = 0; p < 9; ++p) table.set(a, p, rng.below(4));
    const std::size_t T = 1 + rng.below(30);
    const Matrix probs = uniform_probs(rng, T, 17);
    std::vector<std::uint8_t> organs(T);
    for (auto& o : organs) o = static_cast<std::uint8_t>(rng.below(8));
    const Matrix gated = cooccurrence_gate(probs, organs, table, 1 + rng.below(3));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t p = 8; p < 17; ++p) CHECK(gated(t, p) <= probs(t, p));
  }
}

TEST_CASE("co-occurrence csv round trip") {
  TempDir dir("cooc");
  CoOccurrenceTable table;
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t p = 0; p < 9; ++p) table.set(a, p, a * 100 + p);
  write_cooccurrence_csv(dir / "c.csv", table);
  CHECK(read_cooccurrence_csv(dir / "c.csv") == table);
}

TEST_CASE("segment extraction") {
  const std::vector<float> low{0.1f, 0.2f, 0.49f};
  CHECK(extract_segments(low, 9, 0.5).empty());

  const std::vector<float> full(5, 0.9f);
  const auto one = extract_segments(full, 9, 0.5);
  REQUIRE(one.size() == 1);
  CHECK(one[0].start == 0);
  CHECK(one[0].end == 4);
  CHECK(one[0].confidence == doctest::Approx(0.9));

  const std::vector<float> mixed{0.6f, 0.4f, 0.7f, 0.7f};
  const auto two = extract_segments(mixed, 3, 0.5);
  REQUIRE(two.size() == 2);
  CHECK(two[0].start == 0);
  CHECK(two[0].end == 0);
  CHECK(two[0].confidence == doctest::Approx(0.6));
  CHECK(two[1].start == 2);
  CHECK(two[1].end == 3);
  CHECK(two[1].confidence == doctest::Approx(0.7));
  CHECK(two[1].class_id == 3);
}

TEST_CASE("min segment filter") {
  CHECK(min_segment_filter({seg(9, 0, 18)}, 20).empty());
  CHECK(min_segment_filter({seg(9, 0, 19)}, 20).size() == 1);
  const auto kept = min_segment_filter({seg(9, 0, 4), seg(9, 10, 29), seg(9, 40, 139)}, 20);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].length() == 20);
  CHECK(kept[1].length() == 100);
}

TEST_CASE("property: min segment filter is idempotent") {
  Rng rng(12);
  for (int c = 0; c < 100; ++c) {
    std::vector<SegmentPrediction> segs;
    std::size_t pos = 0;
    for (std::size_t i = 0, n = rng.below(12); i < n; ++i) {
      const std::size_t len = 1 + rng.below(40);
      segs.push_back(seg(rng.below(17), pos, pos + len - 1, rng.uniform()));
      pos += len + rng.below(5);
    }
    const std::size_t min_len = 1 + rng.below(30);
    const auto once = min_segment_filter(segs, min_len);
    CHECK(min_segment_filter(once, min_len) == once);
    for (const auto& s : once) CHECK(s.length() >= min_len);
  }
}

TEST_CASE("anatomy gap fill") {
  const auto merged = anatomy_gap_fill({seg(3, 0, 100, 0.8), seg(3, 110, 200, 0.6)}, 20);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].start == 0);
  CHECK(merged[0].end == 200);
  CHECK(merged[0].confidence == doctest::Approx((0.8 * 101 + 0.6 * 91) / 192.0));

  CHECK(anatomy_gap_fill({seg(3, 0, 100), seg(3, 122, 200)}, 20).size() == 2);
  CHECK(anatomy_gap_fill({seg(3, 0, 100), seg(3, 121, 200)}, 20).size() == 1);

  const std::vector<SegmentPrediction> alternating{seg(1, 0, 10), seg(2, 12, 20), seg(1, 22, 30)};
  CHECK(anatomy_gap_fill(alternating, 20) == alternating);

  try {
    anatomy_gap_fill({seg(1, 0, 10), seg(1, 5, 20)}, 20);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::overlapping_segments);
  }
}

TEST_CASE("pipeline on degenerate and oracle inputs") {
  const PostprocessConfig cfg;
  // All-zero logits: uniform anatomy decodes to state 0. Pathology sits at
  // exactly the threshold, so only a table with no pathology counts keeps
  // the output free of pathology segments.
  CoOccurrenceTable healthy_only;
  GroundTruthTrack plain;
  plain.anatomy.assign(10, 0);
  plain.pathology.assign(10, {});
  healthy_only.add(plain);
  const std::size_t T = 300;
  const auto plan = window_plan(T, 128, 64);
  std::vector<Matrix> zeros;
  for (const auto& w : plan) zeros.push_back(Matrix(w.length(), 17));
  const PipelineResult flat = run_pipeline(zeros, plan, T, healthy_only, cfg);
  for (auto a : flat.anatomy) CHECK(a == 0);
  for (const auto& s : flat.segments) CHECK(s.class_id < 8);

  SynthConfig sc;
  sc.frames = 3000;
  sc.seed = 13;
  sc.cls_dim = 2;
  sc.patch_dim = 2;
  sc.min_organ_frames = 40;
  const SynthVideo v = synth_video(sc);
  const Matrix labels = label_matrix(v.truth);
  const auto vplan = window_plan(sc.frames, 512, 256);
  std::vector<Matrix> logits;
  for (const auto& w : vplan) {
    Matrix z = labels.slice_rows(w.start, w.end);
    for (auto& x : z.values()) x = x > 0.5f ? 8.0f : -8.0f;
    logits.push_back(z);
  }
  CoOccurrenceTable table;
  table.add(v.truth);
  const PipelineResult res = run_pipeline(logits, vplan, sc.frames, table, cfg);
  CHECK(res.anatomy == v.truth.anatomy);
  auto want = truth_segments(v.truth);
  std::stable_sort(want.begin(), want.end(), [](const auto& a, const auto& b) {
    return a.class_id != b.class_id ? a.class_id < b.class_id : a.start < b.start;
  });
  REQUIRE(res.segments.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(res.segments[i].class_id == want[i].class_id);
    CHECK(res.segments[i].start == want[i].start);
    CHECK(res.segments[i].end == want[i].end);
  }
  const PipelineResult again = run_pipeline(logits, vplan, sc.frames, table, cfg);
  CHECK(again.segments == res.segments);
  CHECK(again.probs == res.probs);
}

TEST_CASE("property: pipeline anatomy segments never go backwards") {
  Rng rng(14);
  const PostprocessConfig cfg;
  for (int c = 0; c < 100; ++c) {
    const std::size_t T = 50 + rng.below(300);
    Matrix probs = uniform_probs(rng, T, 17);
    const PipelineResult res = postprocess_probs(probs, permissive_table(), cfg);
    std::vector<SegmentPrediction> anat;
    for (const auto& s : res.segments)
      if (s.class_id < 8) anat.push_back(s);
    std::sort(anat.begin(), anat.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < anat.size(); ++i) CHECK(anat[i].class_id >= anat[i - 1].class_id);
    for (const auto& s : res.segments) {
      CHECK(s.start <= s.end);
      CHECK(s.end < T);
      CHECK(s.confidence >= 0.0);
      CHECK(s.confidence <= 1.0);
    }
  }
}

TEST_CASE("segments csv round trip") {
  TempDir dir("segs");
  const std::vector<SegmentPrediction> segs{seg(5, 0, 99, 0.25), seg(13, 40, 80, 0.123456)};
  write_segments_csv(dir / "s.csv", "vid7", segs);
  const auto back = read_segments_csv(dir / "s.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].video_id == "vid7");
  REQUIRE(back[0].segments.size() == 2);
  CHECK(back[0].segments[0] == segs[0]);
  CHECK(back[0].segments[1].confidence == 0.123456);
}
