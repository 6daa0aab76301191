#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gtn/labels.hpp"
#include "gtn/windows.hpp"

namespace gtn {

struct LossConfig {
  double gamma_pos = 0.0;
  double gamma_neg = 4.0;
  double clip = 0.05;
  std::array<double, kNumAnatomy> anatomy_pos_boost{1, 4, 4, 1, 4, 1, 4, 1};  // esophagus, z-line, pylorus, ICV
  std::array<double, kNumPathology> pathology_class_weight{1, 3, 3, 3, 1, 1, 1, 1, 1};  // angiectasia, blood, erosion
  double boundary_boost = 1.0;
  std::size_t boundary_radius = 3;
  double mono_weight = 0.1;
};

void validate(const LossConfig& cfg);

/// Per-call ASL parameters: focusing exponents, clip margin, and per-class
/// positive boost and class weight (both length C).
struct AslParams {
  double gamma_pos = 0.0;
  double gamma_neg = 4.0;
  double clip = 0.05;
  std::vector<double> pos_boost;
  std::vector<double> class_weight;
};

struct LossValue {
  double loss = 0;
  MatrixD grad;  // d loss / d logits
};

/// Asymmetric loss averaged over T x C with its exact gradient.
///   positive: -boost_c (1 - p)^gp log p
///   negative: -p_m^gn log(1 - p_m), p_m = max(p - clip, 0)
/// Each term is scaled by frame_weight[t] * class_weight[c].
LossValue asl_loss(const MatrixD& logits, const MatrixD& targets, const AslParams& params,
                   std::span<const double> frame_weight);

/// 1 + beta on frames within radius of a label change, 1 elsewhere. A change
/// at t means labels(t) != labels(t - 1) (anatomy index or any pathology bit).
std::vector<double> boundary_weights(const GroundTruthTrack& gt, double beta, std::size_t radius);

/// Hinge on decreases of the expected organ index E_t = sum_a a * softmax_a,
/// averaged over the T - 1 steps.
LossValue monotonicity_loss(const MatrixD& anatomy_logits);

struct TotalLoss {
  double loss = 0;
  double anatomy_asl = 0;
  double pathology_asl = 0;
  double monotonicity = 0;
  MatrixD anatomy_grad;    // T x 8
  MatrixD pathology_grad;  // T x 9
};

/// ASL on anatomy (one-hot targets, positive boosts) + ASL on pathology
/// (class weights), both boundary-weighted, + mono_weight * monotonicity.
TotalLoss total_loss(const MatrixD& anatomy_logits, const MatrixD& pathology_logits, const GroundTruthTrack& gt,
                     const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Weighted window sampler

struct SamplerConfig {
  std::vector<std::size_t> rare_classes{0, 1, 2, 3, 4, 5, 6, 7, 8};  // pathology indices
  double oversample = 4.0;
};

void validate(const SamplerConfig& cfg);

struct VideoWindow {
  std::size_t video = 0;
  Window window;
};

/// oversample for windows holding any rare-class frame, 1 otherwise.
std::vector<double> window_weights(const std::vector<GroundTruthTrack>& videos, const std::vector<VideoWindow>& plan,
                                   const SamplerConfig& cfg);

/// n independent categorical draws (with replacement) over plan indices.
std::vector<std::size_t> sample_windows(const std::vector<GroundTruthTrack>& videos,
                                        const std::vector<VideoWindow>& plan, const SamplerConfig& cfg,
                                        std::uint64_t seed, std::size_t n);

// ---------------------------------------------------------------------------
// Finite-difference verification

/// max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf, 1e-12).
double gradient_rel_error(const MatrixD& analytic, const MatrixD& numeric);

/// Central differences of f at x with the given step.
template <typename F>
MatrixD numeric_gradient(F&& f, const MatrixD& x, double step = 1e-6) {
  MatrixD g(x.rows(), x.cols());
  MatrixD probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + step;
    const double up = f(probe);
    probe.values()[i] = orig - step;
    const double down = f(probe);
    probe.values()[i] = orig;
    g.values()[i] = (up - down) / (2 * step);
  }
  return g;
}

enum class GradFault { none, flip_monotonicity_sign };

struct GradcheckTerm {
  std::string term;
  std::size_t cases = 0;
  std::size_t passed = 0;
  double worst_rel = 0;
};

/// Random seeded cases for asl, monotonicity and total_loss, each compared
/// against 64-bit central differences (step 1e-6) at tolerance `tol`.
std::vector<GradcheckTerm> run_gradcheck(std::uint64_t seed, std::size_t cases, double tol = 1e-4,
                                         GradFault fault = GradFault::none);

}  // namespace gtn
