#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gtn/tensor.hpp"

namespace gtn {

inline constexpr std::size_t kNumAnatomy = 8;
inline constexpr std::size_t kNumPathology = 9;
inline constexpr std::size_t kNumClasses = kNumAnatomy + kNumPathology;

/// Anatomy classes in proximal-to-distal traversal order.
inline constexpr std::array<std::string_view, kNumAnatomy> kAnatomyNames = {
    "mouth", "esophagus", "z-line", "stomach", "pylorus", "small intestine", "ileocecal valve", "colon"};

inline constexpr std::array<std::string_view, kNumPathology> kPathologyNames = {
    "active bleeding", "angiectasia", "blood",     "erosion", "erythema",
    "hematin",         "lymphangioectasis", "polyp", "ulcer"};

namespace anatomy {
inline constexpr std::size_t mouth = 0, esophagus = 1, z_line = 2, stomach = 3, pylorus = 4,
                             small_intestine = 5, ileocecal_valve = 6, colon = 7;
}
namespace pathology {
inline constexpr std::size_t active_bleeding = 0, angiectasia = 1, blood = 2, erosion = 3, erythema = 4,
                             hematin = 5, lymphangioectasis = 6, polyp = 7, ulcer = 8;
}

/// Class id in the joint 17-class space: anatomy 0-7, pathology 8-16.
std::string_view class_name(std::size_t class_id);

struct FeatureSequence {
  std::string video_id;
  Matrix cls;    // T x cls_dim
  Matrix patch;  // T x patch_dim

  std::size_t frames() const { return cls.rows(); }
};

struct GroundTruthTrack {
  std::vector<std::uint8_t> anatomy;                          // per frame, 0-7, non-decreasing
  std::vector<std::array<std::uint8_t, kNumPathology>> pathology;  // per frame, binary

  std::size_t frames() const { return anatomy.size(); }
  bool healthy(std::size_t t) const;

  friend bool operator==(const GroundTruthTrack&, const GroundTruthTrack&) = default;
};

/// Throws Errc::label_mismatch if the track breaks its invariants
/// (lengths, ranges, monotone anatomy).
void validate(const GroundTruthTrack& gt);

/// T x 17 binary matrix (anatomy one-hot followed by pathology bits).
Matrix label_matrix(const GroundTruthTrack& gt);

}  // namespace gtn
