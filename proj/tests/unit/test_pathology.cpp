#include <doctest.h>

#include <cmath>

#include "gtn/datasynth.hpp"
#include "gtn/error.hpp"
#include "gtn/pathology.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace gtn;
using gtn::test::random_matrix;
using gtn::test::TempDir;
namespace o = gtn::oracle;

namespace {

ModelDims toy_dims() {
  ModelDims d;
  d.cls_dim = 12;
  d.patch_dim = 10;
  d.hidden = 8;
  d.heads = 2;
  d.gcn_k = 2;
  d.gcn_radius = 1;
  d.ssm_state = 4;
  d.window = 16;
  d.gps_hidden = 4;
  d.cond_hidden = 4;
  return d;
}

PathologyWeights live_weights(const ModelDims& dims, std::uint64_t seed) {
  PathologyWeights w = init_pathology_weights(dims, seed);
  Rng rng(seed + 1);
  PathologyWeights::visit(w, [&](const std::string&, Matrix& m, ParamKind kind) {
    if (kind == ParamKind::bias || kind == ParamKind::skip)
      for (auto& v : m.values()) v = static_cast<float>(0.3 * rng.normal());
  });
  return w;
}

Matrix one_hot_logits(const std::vector<std::uint8_t>& classes) {
  Matrix m(classes.size(), kNumAnatomy, -200.0f);
  for (std::size_t t = 0; t < classes.size(); ++t) m(t, classes[t]) = 0.0f;
  return m;
}

Matrix one_hot_probs(const std::vector<std::uint8_t>& classes) {
  Matrix m(classes.size(), kNumAnatomy);
  for (std::size_t t = 0; t < classes.size(); ++t) m(t, classes[t]) = 1.0f;
  return m;
}

AnatomyPrototypes random_protos(Rng& rng, std::size_t dim) {
  AnatomyPrototypes p;
  p.prototypes = random_matrix(rng, kNumAnatomy, dim);
  p.support.fill(1);
  return p;
}

SynthConfig quiet_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.frames = 400;
  cfg.seed = seed;
  cfg.cls_dim = 6;
  cfg.patch_dim = 10;
  cfg.noise_sigma = 0;
  return cfg;
}

}  // namespace

TEST_CASE("prototypes recover the planted means on noise-free data") {
  SynthConfig cfg = quiet_config(1);
  cfg.burst_rate = 0;
  const SynthVideo v = synth_video(cfg);
  const AnatomyPrototypes p = fit_prototypes({&v.features.patch}, {&v.truth});
  CHECK(p.prototypes == v.prototypes);
  for (auto s : p.support) CHECK(s > 0);
}

TEST_CASE("prototype fallback and two-point mean") {
  GroundTruthTrack gt;
  gt.anatomy = {3, 3, 5};
  gt.pathology.assign(3, {});
  gt.pathology[2][4] = 1;  // the only class-5 frame is not healthy
  const Matrix patch(3, 2, {1, 2, 3, 6, 100, 100});
  const AnatomyPrototypes p = fit_prototypes({&patch}, {&gt});
  CHECK(p.prototypes(3, 0) == 2.0f);
  CHECK(p.prototypes(3, 1) == 4.0f);
  CHECK(p.support[3] == 2);
  // Every other class falls back to the global healthy mean.
  for (std::size_t a : {0, 1, 2, 4, 5, 6, 7}) {
    CHECK(p.support[a] == 0);
    CHECK(p.prototypes(a, 0) == 2.0f);
    CHECK(p.prototypes(a, 1) == 4.0f);
  }

  GroundTruthTrack sick = gt;
  for (auto& row : sick.pathology) row[0] = 1;
  try {
    fit_prototypes({&patch}, {&sick});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_healthy_frames);
  }
}

TEST_CASE("fitting videos one by one equals fitting their concatenation") {
  const SynthVideo a = synth_video(quiet_config(2));
  const SynthVideo b = synth_video(quiet_config(3));
  GroundTruthTrack joint = a.truth;
  joint.anatomy.insert(joint.anatomy.end(), b.truth.anatomy.begin(), b.truth.anatomy.end());
  joint.pathology.insert(joint.pathology.end(), b.truth.pathology.begin(), b.truth.pathology.end());
  Matrix patch(a.features.patch.rows() + b.features.patch.rows(), a.features.patch.cols());
  std::copy(a.features.patch.values().begin(), a.features.patch.values().end(), patch.values().begin());
  std::copy(b.features.patch.values().begin(), b.features.patch.values().end(),
            patch.values().begin() + static_cast<std::ptrdiff_t>(a.features.patch.size()));
  const auto split = fit_prototypes({&a.features.patch, &b.features.patch}, {&a.truth, &b.truth});
  const auto whole = fit_prototypes({&patch}, {&joint});
  CHECK(split.prototypes == whole.prototypes);
  CHECK(split.support == whole.support);
}

TEST_CASE("prototype files round trip") {
  TempDir dir("protos");
  Rng rng(4);
  AnatomyPrototypes p = random_protos(rng, 5);
  p.support = {1, 2, 3, 4, 5, 6, 7, 0};
  save_prototypes(dir.path(), p);
  const AnatomyPrototypes back = load_prototypes(dir.path());
  CHECK(back.prototypes == p.prototypes);
  CHECK(back.support == p.support);
}

TEST_CASE("deviation signal") {
  Rng rng(5);
  const AnatomyPrototypes p = random_protos(rng, 6);
  Matrix patch(1, 6);
  for (std::size_t j = 0; j < 6; ++j) patch(0, j) = p.prototypes(2, j);
  const Matrix matched = deviation_signal(patch, one_hot_probs({2}), p);
  for (float v : matched.values()) CHECK(v == 0.0f);

  const Matrix x = random_matrix(rng, 2, 6);
  const Matrix uniform(2, 8, 0.125f);
  const Matrix du = deviation_signal(x, uniform, p);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t j = 0; j < 6; ++j) {
      double mean = 0;
      for (std::size_t a = 0; a < 8; ++a) mean += p.prototypes(a, j) / 8.0;
      CHECK(du(t, j) == doctest::Approx(x(t, j) - mean).epsilon(1e-6));
    }

  Matrix mix(1, 8);
  mix(0, 0) = 0.3f;
  mix(0, 1) = 0.7f;
  const Matrix xm = random_matrix(rng, 1, 6);
  const Matrix dm = deviation_signal(xm, mix, p);
  for (std::size_t j = 0; j < 6; ++j) {
    const double expect = double(xm(0, j)) - (0.3 * p.prototypes(0, j) + 0.7 * p.prototypes(1, j));
    CHECK(dm(0, j) == doctest::Approx(expect).epsilon(1e-6));
  }

  Matrix bad = uniform;
  bad(0, 0) += 0.01f;
  CHECK_THROWS_AS(deviation_signal(x, bad, p), Error);
}

TEST_CASE("property: deviation is affine in the patch") {
  Rng rng(6);
  for (int c = 0; c < 100; ++c) {
    const std::size_t T = 1 + rng.below(6), D = 1 + rng.below(8);
    const AnatomyPrototypes p = random_protos(rng, D);
    const Matrix probs = row_softmax(random_matrix(rng, T, 8));
    const auto x = random_matrix<double>(rng, T, D);
    const auto delta = random_matrix<double>(rng, T, D);
    const Matrix base = deviation_signal(x.cast<float>(), probs, p);
    const Matrix moved = deviation_signal(add(x, delta).cast<float>(), probs, p);
    for (std::size_t i = 0; i < base.size(); ++i)
      CHECK(double(moved.values()[i]) - base.values()[i] == doctest::Approx(delta.values()[i]).epsilon(1e-4).scale(8));
  }
}

TEST_CASE("patch motion") {
  CHECK(patch_motion(Matrix(3, 2, 1.5f)) == Matrix(3, 2));
  CHECK(patch_motion(Matrix(1, 4, 9.0f)) == Matrix(1, 4));
  const Matrix vuv(3, 2, {1, 2, 4, 6, 1, 2});
  CHECK(patch_motion(vuv) == Matrix(3, 2, {0, 0, 3, 4, -3, -4}));
}

TEST_CASE("depthwise separable conv") {
  Rng rng(7);
  const std::size_t C = 4;
  Matrix delta_kernel(C, 5);
  for (std::size_t c = 0; c < C; ++c) delta_kernel(c, 2) = 1.0f;
  const Matrix h = random_matrix(rng, 7, C);
  CHECK(ds_conv1d(h, delta_kernel, Matrix::identity(C)) == h);

  const Matrix kernel = random_matrix(rng, C, 5);
  const Matrix point = random_matrix(rng, C, C);
  Matrix impulse(9, C);
  for (std::size_t c = 0; c < C; ++c) impulse(4, c) = 1.0f;
  const Matrix resp = ds_conv1d(impulse, kernel, point);
  for (std::size_t t = 0; t < 9; ++t) {
    bool any = false;
    for (float v : resp.row(t)) any = any || v != 0.0f;
    CHECK(any == (t >= 2 && t <= 6));
  }

  const Matrix six = random_matrix(rng, 6, C);
  CHECK(o::rel_error(ds_conv1d(six, kernel, point), o::ds_conv(o::from(six), kernel, point)) <= 1e-5);
  CHECK_THROWS_AS(ds_conv1d(six, Matrix(C, 3), point), Error);
}

TEST_CASE("property: conv output ignores inputs more than two frames away") {
  Rng rng(8);
  for (int c = 0; c < 100; ++c) {
    const std::size_t T = 1 + rng.below(15), C = 1 + rng.below(5);
    const Matrix kernel = random_matrix(rng, C, 5);
    const Matrix point = random_matrix(rng, C, C);
    const Matrix h = random_matrix(rng, T, C);
    Matrix poked = h;
    const std::size_t at = rng.below(T);
    for (auto& v : poked.row(at)) v += static_cast<float>(rng.normal() * 10);
    const Matrix a = ds_conv1d(h, kernel, point);
    const Matrix b = ds_conv1d(poked, kernel, point);
    for (std::size_t t = 0; t < T; ++t) {
      if ((t > at ? t - at : at - t) <= 2) continue;
      for (std::size_t j = 0; j < C; ++j) CHECK(a(t, j) == b(t, j));
    }
  }
}

TEST_CASE("pathology temporal block") {
  const ModelDims dims = toy_dims();
  Rng rng(9);
  const Matrix h = random_matrix(rng, 5, dims.hidden);
  const PathologyWeights zero = zero_pathology_weights(dims);
  CHECK(pathology_temporal(h, zero, dims) == h);

  PathologyWeights w = live_weights(dims, 10);
  PathologyWeights passthrough = w;
  passthrough.dw_kernel = Matrix(dims.hidden, 5);
  for (std::size_t c = 0; c < dims.hidden; ++c) passthrough.dw_kernel(c, 2) = 1.0f;
  passthrough.pointwise = Matrix::identity(dims.hidden);
  // Zero scan: no input projections and no skip.
  passthrough.scan.b_proj = Matrix(dims.hidden, dims.ssm_state);
  passthrough.scan.d_skip = Matrix(1, dims.hidden);
  const Matrix g = dual_graph_gcn(h, w.gcn, dims.gcn_k, dims.gcn_radius);
  CHECK(pathology_temporal(h, passthrough, dims) == add(g, g));

  CHECK(o::rel_error(pathology_temporal(h, w, dims), o::pathology_temporal(o::from(h), w, dims)) <= 1e-5);
}

TEST_CASE("pathology forward") {
  const ModelDims dims = toy_dims();
  Rng rng(11);
  const AnatomyPrototypes p = random_protos(rng, dims.patch_dim);
  const Matrix patch = random_matrix(rng, 4, dims.patch_dim);
  const Matrix logits = random_matrix(rng, 4, 8);

  const Matrix zero = pathology_forward(patch, logits, p, zero_pathology_weights(dims), dims);
  CHECK(zero.cols() == 9);
  for (float v : zero.values()) CHECK(v == 0.0f);

  const PathologyWeights w = live_weights(dims, 12);
  const Matrix got = pathology_forward(patch, logits, p, w, dims);
  CHECK(got == pathology_forward(patch, logits, p, w, dims));
  CHECK(o::rel_error(got, o::pathology(o::from(patch), o::from(logits), o::from(p.prototypes), w, dims)) <= 1e-5);
}

TEST_CASE("healthy noise-free frames contribute nothing through the deviation path") {
  const ModelDims dims = toy_dims();
  SynthConfig cfg = quiet_config(13);
  cfg.burst_rate = 0;
  const SynthVideo v = synth_video(cfg);
  const AnatomyPrototypes p{v.prototypes, {}};
  const Matrix patch = v.features.patch.slice_rows(40, 48);
  const std::vector<std::uint8_t> organs(v.truth.anatomy.begin() + 40, v.truth.anatomy.begin() + 48);
  const Matrix logits = one_hot_logits(organs);
  const Matrix dev = deviation_signal(patch, row_softmax(logits), p);
  for (float x : dev.values()) CHECK(x == 0.0f);

  const PathologyWeights w = live_weights(dims, 14);
  PathologyWeights other = w;
  Rng rng(15);
  other.dev_proj = random_matrix(rng, dims.patch_dim, dims.hidden, 5.0);
  CHECK(pathology_fused(patch, logits, p, w, dims) == pathology_fused(patch, logits, p, other, dims));
}

TEST_CASE("property: conditioning enters additively") {
  const ModelDims dims = toy_dims();
  Rng rng(16);
  for (int c = 0; c < 100; ++c) {
    const PathologyWeights w = live_weights(dims, 1000 + c);
    const std::size_t T = 1 + rng.below(6);
    const AnatomyPrototypes p = random_protos(rng, dims.patch_dim);
    const Matrix patch = random_matrix(rng, T, dims.patch_dim);
    const Matrix la = random_matrix(rng, T, 8);
    const Matrix lb = random_matrix(rng, T, 8);
    // Keep the deviation path fixed so only the conditioning input changes.
    PathologyWeights no_dev = w;
    no_dev.dev_proj = Matrix(dims.patch_dim, dims.hidden);
    const Matrix fa = pathology_fused(patch, la, p, no_dev, dims);
    const Matrix fb = pathology_fused(patch, lb, p, no_dev, dims);
    const Matrix ca = mlp_forward(la, w.cond_mlp);
    const Matrix cb = mlp_forward(lb, w.cond_mlp);
    for (std::size_t i = 0; i < fa.size(); ++i) {
      const double want = double(cb.values()[i]) - ca.values()[i];
      CHECK(double(fb.values()[i]) - fa.values()[i] == doctest::Approx(want).epsilon(1e-4).scale(4));
    }
  }
}

TEST_CASE("lesion frames deviate more than healthy frames") {
  SynthConfig cfg;
  cfg.frames = 3000;
  cfg.seed = 17;
  cfg.cls_dim = 8;
  cfg.patch_dim = 64;
  cfg.noise_sigma = 0.1;
  cfg.lesion_magnitude = 5.0;
  cfg.burst_rate = 5;
  const SynthVideo v = synth_video(cfg);
  const AnatomyPrototypes p = fit_prototypes({&v.features.patch}, {&v.truth});
  const Matrix dev = deviation_signal(v.features.patch, one_hot_probs(v.truth.anatomy), p);
  double lesion = 0, healthy = 0;
  std::size_t nl = 0, nh = 0;
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    double ss = 0;
    for (float x : dev.row(t)) ss += double(x) * x;
    if (v.truth.healthy(t)) {
      healthy += std::sqrt(ss);
      ++nh;
    } else {
      lesion += std::sqrt(ss);
      ++nl;
    }
  }
  REQUIRE(nl > 0);
  REQUIRE(nh > 0);
  CHECK(lesion / double(nl) > 3.0 * healthy / double(nh));
}
