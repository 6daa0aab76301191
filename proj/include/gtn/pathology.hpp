#pragma once

#include <array>
#include <filesystem>

#include "gtn/labels.hpp"
#include "gtn/layers.hpp"
#include "gtn/model.hpp"

namespace gtn {

/// Healthy appearance per organ in raw patch-feature space.
struct AnatomyPrototypes {
  Matrix prototypes;  // 8 x patch_dim
  std::array<std::size_t, kNumAnatomy> support{};
};

/// Accumulates healthy frames (no pathology bit set) per organ. Frames are
/// summed one at a time in double, so feeding videos in sequence gives the
/// same result as feeding their concatenation.
class PrototypeFitter {
 public:
  void add(const Matrix& patch, const GroundTruthTrack& gt);

  /// Per-organ means; organs without healthy frames get the global healthy
  /// mean and support 0. Throws Errc::no_healthy_frames if nothing was seen.
  AnatomyPrototypes finish() const;

 private:
  std::size_t dim_ = 0;
  std::vector<double> sums_;  // 8 x dim
  std::array<std::size_t, kNumAnatomy> support_{};
};

AnatomyPrototypes fit_prototypes(const std::vector<const Matrix*>& patches,
                                 const std::vector<const GroundTruthTrack*>& truths);

void save_prototypes(const std::filesystem::path& dir, const AnatomyPrototypes& p);
AnatomyPrototypes load_prototypes(const std::filesystem::path& dir);

/// patch[t] - sum_a probs[t, a] * P[a]. probs rows must sum to 1 (+-1e-4);
/// they are inputs only, nothing here feeds back into the anatomy branch.
Matrix deviation_signal(const Matrix& patch, const Matrix& anatomy_probs, const AnatomyPrototypes& protos);

/// g = GCN(h) (with its own residual), c = ds_conv(g), m = scan(c);
/// returns c + m + g.
Matrix pathology_temporal(const Matrix& h, const PathologyWeights& w, const ModelDims& dims);

/// Fused pathology representation before the head:
/// fuse([dev || motion || content]) + cond_mlp(anatomy logits).
Matrix pathology_fused(const Matrix& patch, const Matrix& anatomy_logits, const AnatomyPrototypes& protos,
                       const PathologyWeights& w, const ModelDims& dims);

/// Pathology branch on one window -> T x 9 logits.
Matrix pathology_forward(const Matrix& patch, const Matrix& anatomy_logits, const AnatomyPrototypes& protos,
                         const PathologyWeights& w, const ModelDims& dims);

}  // namespace gtn
