#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gtn/labels.hpp"

namespace gtn {

struct SynthConfig {
  std::size_t frames = 5000;
  std::uint64_t seed = 0;
  std::string video_id = "synth";
  std::size_t cls_dim = 1024;
  std::size_t patch_dim = 1024;
  double organ_concentration = 2.0;  // Dirichlet concentration for organ durations
  std::size_t min_organ_frames = 1;
  double burst_rate = 2.0;           // expected bursts per 1000 frames
  std::size_t burst_min = 20;
  std::size_t burst_max = 120;
  std::size_t burst_gap = 5;         // minimum frames between consecutive bursts
  double noise_sigma = 0.1;          // per-dimension standard deviation
  double lesion_magnitude = 5.0;     // per-dimension RMS of each lesion offset
};

void validate(const SynthConfig& cfg);

struct SynthVideo {
  FeatureSequence features;
  GroundTruthTrack truth;
  Matrix prototypes;      // 8 x patch_dim, planted healthy appearance per organ
  Matrix lesion_offsets;  // 9 x patch_dim
};

// Substream tags. Each component of a video draws from its own stream so a
// component can be replayed without replaying the others.
namespace synth_stream {
inline constexpr std::uint64_t prototypes = 1, lesions = 2, durations = 3, bursts = 4, noise = 5, cls_map = 6;
}

/// Generates a video with monotone organ traversal, pathology bursts and
/// features built from the planted prototypes.
///
/// Burst placement, drawn from Rng(seed, synth_stream::bursts): starting at
/// the first non-mouth frame, repeatedly draw gap = floor(Exp(rate/1000)),
/// length = burst_min + below(burst_max - burst_min + 1), class = below(9);
/// the burst covers [pos + gap, min(pos + gap + length, T) - 1] and is kept
/// only if it still spans burst_min frames. The next search starts
/// burst_gap frames after its end. Stops when the start passes T - 1.
SynthVideo synth_video(const SynthConfig& cfg);

/// Organ durations (frames per organ, sum == T, each >= min_organ_frames).
std::array<std::size_t, kNumAnatomy> draw_organ_durations(const SynthConfig& cfg);

// Dataset directory: cls.ten, patch.ten, labels.csv, meta.json.
struct DatasetMeta {
  std::string video_id;
  std::size_t frames = 0;
  std::uint64_t seed = 0;
  int format_version = 1;
};

void write_dataset(const std::filesystem::path& dir, const FeatureSequence& seq, const GroundTruthTrack& gt,
                   std::uint64_t seed = 0);

struct Dataset {
  FeatureSequence features;
  GroundTruthTrack truth;
  DatasetMeta meta;
};

Dataset read_dataset(const std::filesystem::path& dir);

void write_labels_csv(const std::filesystem::path& path, const GroundTruthTrack& gt);
GroundTruthTrack read_labels_csv(const std::filesystem::path& path);

}  // namespace gtn
