#include "gtn/losses.hpp"

#include <algorithm>
#include <cmath>

#include "gtn/error.hpp"
#include "gtn/rng.hpp"

namespace gtn {
namespace {

// log(sigmoid(z)) without overflow.
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

double sigmoid_d(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double pow_or_one(double base, double e) { return e == 0.0 ? 1.0 : std::pow(base, e); }

std::vector<double> softmax_row(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> q(z.size());
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    q[i] = std::exp(z[i] - mx);
    s += q[i];
  }
  for (auto& v : q) v /= s;
  return q;
}

}  // namespace

void validate(const LossConfig& cfg) {
  require(cfg.gamma_pos >= 0 && cfg.gamma_neg >= 0, Errc::invalid_argument, "ASL focusing exponents must be >= 0");
  require(cfg.clip >= 0 && cfg.clip < 1, Errc::invalid_argument, "ASL clip margin must be in [0, 1)");
  for (double v : cfg.anatomy_pos_boost) require(v > 0, Errc::invalid_argument, "anatomy boosts must be > 0");
  for (double v : cfg.pathology_class_weight) require(v > 0, Errc::invalid_argument, "pathology weights must be > 0");
  require(cfg.boundary_boost >= 0, Errc::invalid_argument, "boundary boost must be >= 0");
  require(cfg.mono_weight >= 0, Errc::invalid_argument, "monotonicity weight must be >= 0");
}

LossValue asl_loss(const MatrixD& logits, const MatrixD& targets, const AslParams& params,
                   std::span<const double> frame_weight) {
  const std::size_t T = logits.rows();
  const std::size_t C = logits.cols();
  require(targets.rows() == T && targets.cols() == C, Errc::shape_mismatch, "asl_loss: targets shape mismatch");
  require(frame_weight.size() == T, Errc::shape_mismatch, "asl_loss: frame weight length mismatch");
  require(params.pos_boost.size() == C && params.class_weight.size() == C, Errc::shape_mismatch,
          "asl_loss: per-class weight length mismatch");
  require(params.gamma_pos >= 0 && params.gamma_neg >= 0 && params.clip >= 0 && params.clip < 1,
          Errc::invalid_argument, "asl_loss: bad focusing/clip parameters");
  for (double w : frame_weight) require(w > 0, Errc::invalid_argument, "asl_loss: frame weights must be > 0");
  for (std::size_t c = 0; c < C; ++c) {
    require(params.pos_boost[c] > 0 && params.class_weight[c] > 0, Errc::invalid_argument,
            "asl_loss: class weights must be > 0");
  }

  LossValue out;
  out.grad = MatrixD(T, C);
  if (T * C == 0) return out;
  const double norm = 1.0 / static_cast<double>(T * C);
  const double gp = params.gamma_pos;
  const double gn = params.gamma_neg;
  double total = 0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      const double y = targets(t, c);
      if (y != 0.0 && y != 1.0) fail(Errc::invalid_argument, "asl_loss: targets must be 0 or 1");
      const double z = logits(t, c);
      const double p = sigmoid_d(z);
      const double scale = frame_weight[t] * params.class_weight[c] * norm;
      double term = 0;
      double dz = 0;
      if (y == 1.0) {
        const double b = params.pos_boost[c];
        const double logp = log_sigmoid(z);
        const double om = sigmoid_d(-z);  // 1 - p
        const double focus = pow_or_one(om, gp);
        term = -b * focus * logp;
        dz = b * (gp * p * focus * logp - focus * om);
      } else {
        const double q = p - params.clip;
        if (q > 0) {
          const double log1mq = std::log1p(-q);
          term = -pow_or_one(q, gn) * log1mq;
          const double dq = (gn == 0.0 ? 0.0 : -gn * std::pow(q, gn - 1.0) * log1mq) + pow_or_one(q, gn) / (1.0 - q);
          dz = dq * p * (1.0 - p);
        }
      }
      total += scale * term;
      out.grad(t, c) = scale * dz;
    }
  }
  out.loss = total;
  return out;
}

std::vector<double> boundary_weights(const GroundTruthTrack& gt, double beta, std::size_t radius) {
  const std::size_t T = gt.frames();
  std::vector<double> w(T, 1.0);
  for (std::size_t t = 1; t < T; ++t) {
    if (gt.anatomy[t] == gt.anatomy[t - 1] && gt.pathology[t] == gt.pathology[t - 1]) continue;
    const std::size_t lo = t > radius ? t - radius : 0;
    const std::size_t hi = std::min(T - 1, t + radius);
    for (std::size_t u = lo; u <= hi; ++u) w[u] = 1.0 + beta;
  }
  return w;
}

LossValue monotonicity_loss(const MatrixD& logits) {
  const std::size_t T = logits.rows();
  require(T >= 2, Errc::invalid_argument, "monotonicity_loss: needs at least 2 frames");
  const std::size_t A = logits.cols();
  std::vector<std::vector<double>> q(T);
  std::vector<double> e(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    q[t] = softmax_row(logits.row(t));
    for (std::size_t a = 0; a < A; ++a) e[t] += static_cast<double>(a) * q[t][a];
  }
  LossValue out;
  out.grad = MatrixD(T, A);
  const double norm = 1.0 / static_cast<double>(T - 1);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const double gap = e[t] - e[t + 1];
    if (!(gap > 0)) continue;
    out.loss += norm * gap;
    for (std::size_t a = 0; a < A; ++a) {
      out.grad(t, a) += norm * q[t][a] * (static_cast<double>(a) - e[t]);
      out.grad(t + 1, a) -= norm * q[t + 1][a] * (static_cast<double>(a) - e[t + 1]);
    }
  }
  return out;
}

TotalLoss total_loss(const MatrixD& anatomy_logits, const MatrixD& pathology_logits, const GroundTruthTrack& gt,
                     const LossConfig& cfg) {
  validate(cfg);
  const std::size_t T = gt.frames();
  require(anatomy_logits.rows() == T && anatomy_logits.cols() == kNumAnatomy && pathology_logits.rows() == T &&
              pathology_logits.cols() == kNumPathology,
          Errc::shape_mismatch, "total_loss: logits must be T x 8 and T x 9");
  const std::vector<double> fw = boundary_weights(gt, cfg.boundary_boost, cfg.boundary_radius);

  MatrixD anat_targets(T, kNumAnatomy);
  MatrixD path_targets(T, kNumPathology);
  for (std::size_t t = 0; t < T; ++t) {
    anat_targets(t, gt.anatomy[t]) = 1.0;
    for (std::size_t p = 0; p < kNumPathology; ++p) path_targets(t, p) = gt.pathology[t][p];
  }
  AslParams anat{cfg.gamma_pos, cfg.gamma_neg, cfg.clip,
                 std::vector<double>(cfg.anatomy_pos_boost.begin(), cfg.anatomy_pos_boost.end()),
                 std::vector<double>(kNumAnatomy, 1.0)};
  AslParams path{cfg.gamma_pos, cfg.gamma_neg, cfg.clip, std::vector<double>(kNumPathology, 1.0),
                 std::vector<double>(cfg.pathology_class_weight.begin(), cfg.pathology_class_weight.end())};

  const LossValue la = asl_loss(anatomy_logits, anat_targets, anat, fw);
  const LossValue lp = asl_loss(pathology_logits, path_targets, path, fw);

  TotalLoss out;
  out.anatomy_asl = la.loss;
  out.pathology_asl = lp.loss;
  out.anatomy_grad = la.grad;
  out.pathology_grad = lp.grad;
  out.loss = la.loss + lp.loss;
  if (T >= 2 && cfg.mono_weight > 0) {
    const LossValue lm = monotonicity_loss(anatomy_logits);
    out.monotonicity = lm.loss;
    out.loss += cfg.mono_weight * lm.loss;
    for (std::size_t i = 0; i < out.anatomy_grad.size(); ++i) {
      out.anatomy_grad.values()[i] += cfg.mono_weight * lm.grad.values()[i];
    }
  }
  return out;
}

void validate(const SamplerConfig& cfg) {
  require(cfg.oversample >= 1.0, Errc::invalid_argument, "sampler oversample factor must be >= 1");
  for (auto c : cfg.rare_classes) require(c < kNumPathology, Errc::invalid_argument, "rare class index out of range");
}

std::vector<double> window_weights(const std::vector<GroundTruthTrack>& videos, const std::vector<VideoWindow>& plan,
                                   const SamplerConfig& cfg) {
  validate(cfg);
  std::vector<double> w;
  w.reserve(plan.size());
  for (const auto& vw : plan) {
    require(vw.video < videos.size(), Errc::invalid_argument, "sampler: window references unknown video");
    const auto& gt = videos[vw.video];
    require(vw.window.end <= gt.frames() && vw.window.start <= vw.window.end, Errc::invalid_argument,
            "sampler: window outside video");
    bool rare = false;
    for (std::size_t t = vw.window.start; t < vw.window.end && !rare; ++t) {
      for (auto c : cfg.rare_classes) {
        if (gt.pathology[t][c]) {
          rare = true;
          break;
        }
      }
    }
    w.push_back(rare ? cfg.oversample : 1.0);
  }
  return w;
}

std::vector<std::size_t> sample_windows(const std::vector<GroundTruthTrack>& videos,
                                        const std::vector<VideoWindow>& plan, const SamplerConfig& cfg,
                                        std::uint64_t seed, std::size_t n) {
  require(!plan.empty(), Errc::invalid_argument, "sample_windows: empty plan");
  require(n >= 1, Errc::invalid_argument, "sample_windows: n must be >= 1");
  const std::vector<double> w = window_weights(videos, plan, cfg);
  std::vector<double> cum(w.size());
  double acc = 0;
  for (std::size_t i = 0; i < w.size(); ++i) cum[i] = (acc += w[i]);
  Rng rng(seed);
  std::vector<std::size_t> out(n);
  for (auto& idx : out) {
    const double u = rng.uniform() * acc;
    idx = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    idx = std::min(idx, w.size() - 1);
  }
  return out;
}

double gradient_rel_error(const MatrixD& analytic, const MatrixD& numeric) {
  require(analytic.rows() == numeric.rows() && analytic.cols() == numeric.cols(), Errc::shape_mismatch,
          "gradient_rel_error: shape mismatch");
  double diff = 0, sa = 0, sn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic.values()[i] - numeric.values()[i]));
    sa = std::max(sa, std::abs(analytic.values()[i]));
    sn = std::max(sn, std::abs(numeric.values()[i]));
  }
  return diff / std::max({sa, sn, 1e-12});
}

namespace {

MatrixD random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale) {
  MatrixD m(r, c);
  for (auto& v : m.values()) v = scale * rng.normal();
  return m;
}

GroundTruthTrack random_track(Rng& rng, std::size_t T) {
  GroundTruthTrack gt;
  gt.anatomy.resize(T);
  gt.pathology.assign(T, {});
  std::uint8_t a = static_cast<std::uint8_t>(rng.below(3));
  for (std::size_t t = 0; t < T; ++t) {
    if (rng.uniform() < 0.3 && a + 1u < kNumAnatomy) ++a;
    gt.anatomy[t] = a;
    for (auto& b : gt.pathology[t]) b = rng.uniform() < 0.2 ? 1 : 0;
  }
  return gt;
}

void record(GradcheckTerm& term, double rel, double tol) {
  ++term.cases;
  if (rel <= tol) ++term.passed;
  term.worst_rel = std::max(term.worst_rel, rel);
}

}  // namespace

std::vector<GradcheckTerm> run_gradcheck(std::uint64_t seed, std::size_t cases, double tol, GradFault fault) {
  require(cases >= 1, Errc::invalid_argument, "gradcheck: cases must be >= 1");
  constexpr double kStep = 1e-6;
  GradcheckTerm asl{"asl"}, mono{"monotonicity"}, total{"total_loss"};
  const double flip = fault == GradFault::flip_monotonicity_sign ? -1.0 : 1.0;

  Rng rng(seed);
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t T = 1 + rng.below(5);
    const std::size_t C = 1 + rng.below(9);
    const MatrixD logits = random_matrix(rng, T, C, 2.0);
    MatrixD targets(T, C);
    for (auto& v : targets.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    AslParams params;
    params.gamma_pos = rng.uniform(0.0, 3.0);
    params.gamma_neg = rng.uniform(1.0, 5.0);
    params.clip = rng.uniform(0.0, 0.1);
    for (std::size_t c = 0; c < C; ++c) {
      params.pos_boost.push_back(rng.uniform(0.5, 4.0));
      params.class_weight.push_back(rng.uniform(0.5, 3.0));
    }
    std::vector<double> fw(T);
    for (auto& v : fw) v = rng.uniform(0.5, 2.0);
    const auto f = [&](const MatrixD& z) { return asl_loss(z, targets, params, fw).loss; };
    record(asl, gradient_rel_error(asl_loss(logits, targets, params, fw).grad, numeric_gradient(f, logits, kStep)), tol);
  }
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t T = 2 + rng.below(7);
    const MatrixD logits = random_matrix(rng, T, kNumAnatomy, 2.0);
    MatrixD analytic = monotonicity_loss(logits).grad;
    for (auto& v : analytic.values()) v *= flip;
    const auto f = [](const MatrixD& z) { return monotonicity_loss(z).loss; };
    record(mono, gradient_rel_error(analytic, numeric_gradient(f, logits, kStep)), tol);
  }
  LossConfig cfg;
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t T = 2 + rng.below(9);
    const GroundTruthTrack gt = random_track(rng, T);
    const MatrixD za = random_matrix(rng, T, kNumAnatomy, 3.0);
    const MatrixD zp = random_matrix(rng, T, kNumPathology, 3.0);
    const TotalLoss tl = total_loss(za, zp, gt, cfg);
    MatrixD ga = tl.anatomy_grad;
    if (flip < 0) {
      const MatrixD gm = monotonicity_loss(za).grad;
      for (std::size_t k = 0; k < ga.size(); ++k) ga.values()[k] -= 2.0 * cfg.mono_weight * gm.values()[k];
    }
    const auto fa = [&](const MatrixD& z) { return total_loss(z, zp, gt, cfg).loss; };
    const auto fp = [&](const MatrixD& z) { return total_loss(za, z, gt, cfg).loss; };
    const double rel = std::max(gradient_rel_error(ga, numeric_gradient(fa, za, kStep)),
                                gradient_rel_error(tl.pathology_grad, numeric_gradient(fp, zp, kStep)));
    record(total, rel, tol);
  }
  return {asl, mono, total};
}

}  // namespace gtn
