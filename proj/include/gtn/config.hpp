#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "gtn/datasynth.hpp"
#include "gtn/losses.hpp"
#include "gtn/model.hpp"
#include "gtn/postprocess.hpp"

namespace gtn {

/// Everything a CLI run depends on besides input/output paths. Stored as one
/// JSON document; each command echoes the resolved copy as resolved.json.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelDims model;
  std::size_t stride = 256;  // window length is model.window
  SynthConfig synth;
  LossConfig loss;
  SamplerConfig sampler;
  PostprocessConfig post;
};

void validate(const RunConfig& cfg);

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelDims, cls_dim, patch_dim, hidden, heads, attn_radius, gcn_k,
                                                gcn_radius, ssm_state, window, gps_hidden, cond_hidden)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthConfig, frames, seed, video_id, cls_dim, patch_dim,
                                                organ_concentration, min_organ_frames, burst_rate, burst_min,
                                                burst_max, burst_gap, noise_sigma, lesion_magnitude)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossConfig, gamma_pos, gamma_neg, clip, anatomy_pos_boost,
                                                pathology_class_weight, boundary_boost, boundary_radius, mono_weight)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SamplerConfig, rare_classes, oversample)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ViterbiConfig, skip_penalty, emission_floor)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PostprocessConfig, median_kernel, viterbi, gate_min_count, threshold,
                                                min_segment, max_gap)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, seed, model, stride, synth, loss, sampler, post)

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace gtn
