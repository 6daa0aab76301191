#include "gtn/labels.hpp"

#include "gtn/error.hpp"

namespace gtn {

std::string_view class_name(std::size_t class_id) {
  if (class_id < kNumAnatomy) return kAnatomyNames[class_id];
  if (class_id < kNumClasses) return kPathologyNames[class_id - kNumAnatomy];
  fail(Errc::invalid_argument, "class id out of range: " + std::to_string(class_id));
}

bool GroundTruthTrack::healthy(std::size_t t) const {
  for (auto b : pathology[t]) {
    if (b) return false;
  }
  return true;
}

void validate(const GroundTruthTrack& gt) {
  if (gt.anatomy.size() != gt.pathology.size()) fail(Errc::label_mismatch, "anatomy/pathology length mismatch");
  for (std::size_t t = 0; t < gt.frames(); ++t) {
    if (gt.anatomy[t] >= kNumAnatomy) fail(Errc::label_mismatch, "anatomy index out of range at frame " + std::to_string(t));
    if (t > 0 && gt.anatomy[t] < gt.anatomy[t - 1]) {
      fail(Errc::label_mismatch, "anatomy track decreases at frame " + std::to_string(t));
    }
    for (auto b : gt.pathology[t]) {
      if (b > 1) fail(Errc::label_mismatch, "non-binary pathology label at frame " + std::to_string(t));
    }
  }
}

Matrix label_matrix(const GroundTruthTrack& gt) {
  Matrix m(gt.frames(), kNumClasses);
  for (std::size_t t = 0; t < gt.frames(); ++t) {
    m(t, gt.anatomy[t]) = 1.0f;
    for (std::size_t p = 0; p < kNumPathology; ++p) m(t, kNumAnatomy + p) = gt.pathology[t][p];
  }
  return m;
}

}  // namespace gtn
