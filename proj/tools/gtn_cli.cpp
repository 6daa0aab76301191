// gtnv2: batch front end over the library.
//
// Every command accepts --config (JSON RunConfig), --seed and --out. Flags
// win over the config file, and the resolved config is written to the
// output directory as resolved.json.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "gtn/config.hpp"
#include "gtn/datasynth.hpp"
#include "gtn/error.hpp"
#include "gtn/evaluation.hpp"
#include "gtn/inference.hpp"
#include "gtn/losses.hpp"
#include "gtn/model.hpp"
#include "gtn/pathology.hpp"
#include "gtn/postprocess.hpp"
#include "gtn/rng.hpp"
#include "gtn/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace gtn;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "JSON run config");
  cmd->add_option("--seed", c.seed, "master seed (overrides config)");
  auto* o = cmd->add_option("--out", c.out, "output directory");
  if (out_required) o->required();
}

void require_exists(const std::string& p, const char* what) {
  if (!fs::exists(p)) fail(Errc::io, std::string(what) + " does not exist: " + p);
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    require_exists(c.config, "config");
    cfg = load_run_config(c.config);
  }
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.synth.seed = *c.seed;
  }
  return cfg;
}

fs::path prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) fail(Errc::io, "cannot create output directory " + out);
  return fs::path(out);
}

void finish(const fs::path& out, const RunConfig& cfg) {
  validate(cfg);
  save_run_config(out / "resolved.json", cfg);
}

template <typename T>
void override(T& dst, const std::optional<T>& src) {
  if (src) dst = *src;
}

std::string read_video_id(const fs::path& dir) {
  std::ifstream f(dir / "meta.json");
  if (!f) fail(Errc::io, "missing meta.json in " + dir.string());
  try {
    return nlohmann::json::parse(f).at("video_id").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, (dir / "meta.json").string() + ": " + e.what());
  }
}

std::size_t count_segments(const std::vector<SegmentPrediction>& segs, bool anatomy) {
  std::size_t n = 0;
  for (const auto& s : segs) n += (s.class_id < kNumAnatomy) == anatomy;
  return n;
}

// ---- synth

struct SynthArgs {
  Common common;
  std::optional<std::size_t> frames, cls_dim, patch_dim, min_organ_frames;
  std::optional<double> noise_sigma, lesion_magnitude, burst_rate;
  std::optional<std::string> video_id;
};

int cmd_synth(const SynthArgs& a) {
  RunConfig cfg = resolve(a.common);
  override(cfg.synth.frames, a.frames);
  override(cfg.synth.cls_dim, a.cls_dim);
  override(cfg.synth.patch_dim, a.patch_dim);
  override(cfg.synth.min_organ_frames, a.min_organ_frames);
  override(cfg.synth.noise_sigma, a.noise_sigma);
  override(cfg.synth.lesion_magnitude, a.lesion_magnitude);
  override(cfg.synth.burst_rate, a.burst_rate);
  override(cfg.synth.video_id, a.video_id);
  validate(cfg.synth);
  const fs::path out = prepare_out(a.common.out);
  const SynthVideo v = synth_video(cfg.synth);
  write_dataset(out, v.features, v.truth, cfg.synth.seed);
  const auto segs = truth_segments(v.truth);
  write_segments_csv(out / "truth_segments.csv", cfg.synth.video_id, segs);
  finish(out, cfg);
  std::cout << "frames " << v.truth.frames() << "\n"
            << "anatomy_segments " << count_segments(segs, true) << "\n"
            << "pathology_segments " << count_segments(segs, false) << "\n";
  return 0;
}

// ---- fit-stats

struct FitArgs {
  Common common;
  std::vector<std::string> train;
};

int cmd_fit_stats(const FitArgs& a) {
  RunConfig cfg = resolve(a.common);
  for (const auto& d : a.train) require_exists(d, "training dir");
  const fs::path out = prepare_out(a.common.out);
  PrototypeFitter fitter;
  CoOccurrenceTable table;
  std::size_t frames = 0;
  for (const auto& d : a.train) {
    const Dataset ds = read_dataset(d);
    fitter.add(ds.features.patch, ds.truth);
    table.add(ds.truth);
    frames += ds.truth.frames();
  }
  const AnatomyPrototypes protos = fitter.finish();
  save_prototypes(out, protos);
  write_cooccurrence_csv(out / "cooccur.csv", table);
  finish(out, cfg);
  std::cout << "videos " << a.train.size() << "\nframes " << frames << "\n";
  return 0;
}

// ---- init-weights

struct InitArgs {
  Common common;
  bool zero = false;
  std::optional<std::size_t> hidden, cls_dim, patch_dim, window;
};

int cmd_init_weights(const InitArgs& a) {
  RunConfig cfg = resolve(a.common);
  override(cfg.model.hidden, a.hidden);
  override(cfg.model.cls_dim, a.cls_dim);
  override(cfg.model.patch_dim, a.patch_dim);
  override(cfg.model.window, a.window);
  validate(cfg.model);
  const fs::path out = prepare_out(a.common.out);
  if (a.zero) {
    save_weights(out, cfg.model, zero_anatomy_weights(cfg.model));
    save_weights(out, cfg.model, zero_pathology_weights(cfg.model));
  } else {
    save_weights(out, cfg.model, init_anatomy_weights(cfg.model, Rng(cfg.seed, 1).next_u64()));
    save_weights(out, cfg.model, init_pathology_weights(cfg.model, Rng(cfg.seed, 2).next_u64()));
  }
  finish(out, cfg);
  std::cout << "weights " << (a.zero ? "zero" : "random") << " hidden " << cfg.model.hidden << "\n";
  return 0;
}

// ---- infer

struct InferArgs {
  Common common;
  std::string data, weights, stats;
  std::optional<std::size_t> stride;
};

ModelDims manifest_dims(const fs::path& weights) {
  const fs::path p = weights / "anatomy.json";
  std::ifstream f(p);
  if (!f) fail(Errc::io, "missing weight manifest " + p.string());
  try {
    return nlohmann::json::parse(f).at("dims").get<ModelDims>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, p.string() + ": " + e.what());
  }
}

int cmd_infer(const InferArgs& a) {
  RunConfig cfg = resolve(a.common);
  require_exists(a.data, "dataset dir");
  require_exists(a.weights, "weights dir");
  require_exists(a.stats, "stats dir");
  // The weights carry their own dims; the config only picks the stride.
  cfg.model = manifest_dims(a.weights);
  if (a.common.config.empty()) cfg.stride = std::max<std::size_t>(1, cfg.model.window / 2);
  override(cfg.stride, a.stride);
  validate(cfg);
  const Dataset ds = read_dataset(a.data);
  const AnatomyWeights aw = load_anatomy_weights(a.weights, cfg.model);
  const PathologyWeights pw = load_pathology_weights(a.weights, cfg.model);
  const AnatomyPrototypes protos = load_prototypes(a.stats);
  require(protos.prototypes.cols() == cfg.model.patch_dim, Errc::shape_mismatch,
          "prototype width does not match the model patch dim");

  const WindowLogits wl = infer_windows(ds.features, aw, pw, protos, cfg.model, cfg.stride);
  const fs::path out = prepare_out(a.common.out);
  fs::create_directories(out / "windows");
  nlohmann::ordered_json plan = nlohmann::ordered_json::array();
  char name[32];
  for (std::size_t i = 0; i < wl.plan.size(); ++i) {
    std::snprintf(name, sizeof name, "%05zu.ten", i);
    save_tensor(out / "windows" / name, wl.logits[i]);
    plan.push_back({{"start", wl.plan[i].start}, {"end", wl.plan[i].end}, {"file", std::string("windows/") + name}});
  }
  std::ofstream pf(out / "plan.json", std::ios::trunc);
  pf << nlohmann::ordered_json{{"video_id", ds.meta.video_id}, {"frames", ds.truth.frames()}, {"windows", plan}}.dump(2)
     << '\n';
  if (!pf) fail(Errc::io, "cannot write plan.json");
  save_tensor(out / "probs.ten", merge_windows(wl.logits, wl.plan, ds.truth.frames()));
  finish(out, cfg);
  std::cout << "frames " << ds.truth.frames() << "\nwindows " << wl.plan.size() << "\n";
  return 0;
}

// ---- postprocess

struct PostArgs {
  Common common;
  std::string probs, stats, video_id = "video";
  std::optional<double> threshold, skip_penalty;
  std::optional<std::size_t> min_segment, max_gap, median_kernel;
};

int cmd_postprocess(const PostArgs& a) {
  RunConfig cfg = resolve(a.common);
  require_exists(a.probs, "probs file");
  require_exists(a.stats, "stats dir");
  override(cfg.post.threshold, a.threshold);
  override(cfg.post.viterbi.skip_penalty, a.skip_penalty);
  override(cfg.post.min_segment, a.min_segment);
  override(cfg.post.max_gap, a.max_gap);
  override(cfg.post.median_kernel, a.median_kernel);
  validate(cfg.post);
  const Matrix probs = load_tensor<float>(a.probs);
  require(probs.cols() == kNumClasses, Errc::shape_mismatch, "probability track must have 17 columns");
  const CoOccurrenceTable table = read_cooccurrence_csv(fs::path(a.stats) / "cooccur.csv");
  const PipelineResult r = postprocess_probs(probs, table, cfg.post);
  const fs::path out = prepare_out(a.common.out);
  write_segments_csv(out / "segments.csv", a.video_id, r.segments);
  save_tensor(out / "gated.ten", r.probs);
  finish(out, cfg);
  std::cout << "anatomy_segments " << count_segments(r.segments, true) << "\n"
            << "pathology_segments " << count_segments(r.segments, false) << "\n";
  return 0;
}

// ---- eval

struct EvalArgs {
  Common common;
  std::string segments;
  std::vector<std::string> gt;
  std::string fixture;
};

// Published per-video scores, before and after post-processing.
EvalReport fixture_report(const std::string& which) {
  struct Row {
    const char* id;
    double m50, m95;
  };
  std::vector<Row> rows;
  if (which == "before") {
    rows = {{"ukdd_navi_00051", 0.4153, 0.4118}, {"ukdd_navi_00068", 0.2392, 0.1766}, {"ukdd_navi_00076", 0.1388, 0.1177}};
  } else if (which == "after") {
    rows = {{"ukdd_navi_00051", 0.4782, 0.4706}, {"ukdd_navi_00068", 0.1912, 0.1765}, {"ukdd_navi_00076", 0.3533, 0.3529}};
  } else {
    fail(Errc::invalid_argument, "unknown fixture '" + which + "' (before|after)");
  }
  std::vector<VideoReport> videos;
  for (const auto& r : rows) {
    VideoReport v;
    v.video_id = r.id;
    v.map = {r.m50, r.m95};
    videos.push_back(v);
  }
  return aggregate(videos);
}

int cmd_eval(const EvalArgs& a) {
  RunConfig cfg = resolve(a.common);
  EvalReport report;
  if (!a.fixture.empty()) {
    report = fixture_report(a.fixture);
  } else {
    if (a.segments.empty() || a.gt.empty()) fail(Errc::invalid_argument, "eval needs --segments and --gt (or --fixture)");
    require_exists(a.segments, "segments csv");
    for (const auto& d : a.gt) require_exists(d, "ground-truth dir");
    const auto predicted = read_segments_csv(a.segments);
    std::vector<VideoReport> videos;
    for (const auto& d : a.gt) {
      const std::string id = read_video_id(d);
      const GroundTruthTrack truth = read_labels_csv(fs::path(d) / "labels.csv");
      std::vector<SegmentPrediction> preds;
      for (const auto& v : predicted)
        if (v.video_id == id) preds.insert(preds.end(), v.segments.begin(), v.segments.end());
      videos.push_back(video_map(id, preds, ground_truth_segments(truth)));
    }
    report = aggregate(videos);
  }
  std::cout << format_report_table(report);
  if (!a.common.out.empty()) {
    const fs::path out = prepare_out(a.common.out);
    std::ofstream f(out / "report.json", std::ios::trunc);
    f << report_to_json(report).dump(2) << '\n';
    if (!f) fail(Errc::io, "cannot write report.json");
    finish(out, cfg);
  }
  return 0;
}

// ---- gradcheck

struct GradArgs {
  Common common;
  std::size_t cases = 100;
  double tol = 1e-4;
  bool inject_fault = false;
};

int cmd_gradcheck(const GradArgs& a) {
  RunConfig cfg = resolve(a.common);
  if (a.cases == 0) fail(Errc::invalid_argument, "--cases must be >= 1");
  const auto terms = run_gradcheck(cfg.seed, a.cases, a.tol,
                                   a.inject_fault ? GradFault::flip_monotonicity_sign : GradFault::none);
  bool ok = true;
  for (const auto& t : terms) {
    const bool pass = t.passed == t.cases;
    ok = ok && pass;
    std::printf("%s %s %zu/%zu worst_rel=%.3e\n", pass ? "PASS" : "FAIL", t.term.c_str(), t.passed, t.cases,
                t.worst_rel);
  }
  if (!a.common.out.empty()) finish(prepare_out(a.common.out), cfg);
  return ok ? 0 : 1;
}

// ---- bench

struct BenchArgs {
  Common common;
  std::size_t frames = 100000;
  std::size_t forward_frames = 4096;
  std::size_t hidden = 128;
  std::size_t repeats = 3;
};

template <typename F>
std::vector<double> time_runs(std::size_t repeats, F&& f) {
  std::vector<double> secs;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return secs;
}

void report_timing(const char* what, std::size_t frames, const std::vector<double>& secs) {
  const double best = *std::min_element(secs.begin(), secs.end());
  const double worst = *std::max_element(secs.begin(), secs.end());
  std::printf("%s: best %.3f s, %.0f frames/s", what, best, double(frames) / best);
  if (secs.size() > 1) std::printf(", spread %.0f%%%s", 100 * (worst - best) / best, worst > 1.2 * best ? " (unstable)" : "");
  std::printf("\n");
}

int cmd_bench(const BenchArgs& a) {
  RunConfig cfg = resolve(a.common);
  if (a.repeats == 0 || a.frames < kNumAnatomy || a.forward_frames == 0)
    fail(Errc::invalid_argument, "bench sizes must be positive");

  // Post-processing + evaluation on a synthetic track with noisy oracle probs.
  SynthConfig sc = cfg.synth;
  sc.frames = a.frames;
  sc.cls_dim = sc.patch_dim = 1;
  const SynthVideo v = synth_video(sc);
  Matrix probs = label_matrix(v.truth);
  Rng rng(cfg.seed, 7);
  for (auto& p : probs.values()) p = static_cast<float>(0.1 + 0.8 * p + rng.uniform(-0.05, 0.05));
  CoOccurrenceTable table;
  table.add(v.truth);
  const auto gts = ground_truth_segments(v.truth);
  const auto post = time_runs(a.repeats, [&] {
    const PipelineResult r = postprocess_probs(probs, table, cfg.post);
    (void)aggregate({video_map(sc.video_id, r.segments, gts)});
  });
  report_timing("postprocess+eval", a.frames, post);

  ModelDims dims = cfg.model;
  dims.hidden = a.hidden;
  validate(dims);
  FeatureSequence seq;
  seq.cls = Matrix(a.forward_frames, dims.cls_dim);
  seq.patch = Matrix(a.forward_frames, dims.patch_dim);
  for (auto& x : seq.cls.values()) x = static_cast<float>(rng.normal());
  for (auto& x : seq.patch.values()) x = static_cast<float>(rng.normal());
  const AnatomyWeights aw = init_anatomy_weights(dims, 1);
  const PathologyWeights pw = init_pathology_weights(dims, 2);
  AnatomyPrototypes protos;
  protos.prototypes = Matrix(kNumAnatomy, dims.patch_dim);
  const std::size_t stride = std::min(cfg.stride, dims.window);
  const auto fwd = time_runs(a.repeats, [&] { (void)infer_windows(seq, aw, pw, protos, dims, stride); });
  report_timing("branch forwards", a.forward_frames, fwd);
  if (!a.common.out.empty()) finish(prepare_out(a.common.out), cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Capsule endoscopy temporal pipeline: synthesis, inference, post-processing and evaluation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic feature dataset");
  add_common(s, synth.common);
  s->add_option("--frames", synth.frames);
  s->add_option("--cls-dim", synth.cls_dim);
  s->add_option("--patch-dim", synth.patch_dim);
  s->add_option("--min-organ-frames", synth.min_organ_frames);
  s->add_option("--noise-sigma", synth.noise_sigma);
  s->add_option("--lesion-magnitude", synth.lesion_magnitude);
  s->add_option("--burst-rate", synth.burst_rate);
  s->add_option("--video-id", synth.video_id);

  FitArgs fit;
  auto* f = app.add_subcommand("fit-stats", "fit healthy prototypes and the co-occurrence table");
  add_common(f, fit.common);
  f->add_option("--train", fit.train, "training dataset dirs")->required();

  InitArgs init;
  auto* iw = app.add_subcommand("init-weights", "write initial branch weights");
  add_common(iw, init.common);
  iw->add_flag("--zero", init.zero, "all-zero weights");
  iw->add_option("--hidden", init.hidden);
  iw->add_option("--cls-dim", init.cls_dim);
  iw->add_option("--patch-dim", init.patch_dim);
  iw->add_option("--window", init.window);

  InferArgs infer;
  auto* in = app.add_subcommand("infer", "run both branches over the window plan");
  add_common(in, infer.common);
  in->add_option("--data", infer.data)->required();
  in->add_option("--weights", infer.weights)->required();
  in->add_option("--stats", infer.stats)->required();
  in->add_option("--stride", infer.stride);

  PostArgs post;
  auto* pp = app.add_subcommand("postprocess", "decode a probability track into segments");
  add_common(pp, post.common);
  pp->add_option("--probs", post.probs)->required();
  pp->add_option("--stats", post.stats)->required();
  pp->add_option("--video-id", post.video_id);
  pp->add_option("--threshold", post.threshold);
  pp->add_option("--skip-penalty", post.skip_penalty);
  pp->add_option("--min-segment", post.min_segment);
  pp->add_option("--max-gap", post.max_gap);
  pp->add_option("--median-kernel", post.median_kernel);

  EvalArgs eval;
  auto* ev = app.add_subcommand("eval", "temporal mAP of predicted segments");
  add_common(ev, eval.common, false);
  ev->add_option("--segments", eval.segments);
  ev->add_option("--gt", eval.gt, "dataset dirs holding labels.csv and meta.json");
  ev->add_option("--fixture", eval.fixture, "aggregate the published per-video scores (before|after)");

  GradArgs grad;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
  add_common(gc, grad.common, false);
  gc->add_option("--cases", grad.cases);
  gc->add_option("--tol", grad.tol);
  gc->add_flag("--inject-fault", grad.inject_fault, "flip the sign of the monotonicity gradient");

  BenchArgs bench;
  auto* bn = app.add_subcommand("bench", "throughput of post-processing and branch forwards");
  add_common(bn, bench.common, false);
  bn->add_option("--frames", bench.frames);
  bn->add_option("--forward-frames", bench.forward_frames);
  bn->add_option("--hidden", bench.hidden);
  bn->add_option("--repeats", bench.repeats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::printf("ERROR invalid_argument: %s\n", e.what());
    return 2;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*f) return cmd_fit_stats(fit);
    if (*iw) return cmd_init_weights(init);
    if (*in) return cmd_infer(infer);
    if (*pp) return cmd_postprocess(post);
    if (*ev) return cmd_eval(eval);
    if (*gc) return cmd_gradcheck(grad);
    if (*bn) return cmd_bench(bench);
  } catch (const Error& e) {
    std::printf("ERROR %s: %s\n", std::string(errc_name(e.code())).c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::printf("ERROR internal: %s\n", e.what());
    return 2;
  }
  return 0;
}
