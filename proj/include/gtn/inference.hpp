#pragma once

#include <vector>

#include "gtn/anatomy.hpp"
#include "gtn/pathology.hpp"
#include "gtn/windows.hpp"

namespace gtn {

struct WindowLogits {
  std::vector<Window> plan;
  std::vector<Matrix> logits;  // per window: length x 17 (anatomy then pathology)
};

/// Runs both branches over every window of the plan (window = dims.window).
WindowLogits infer_windows(const FeatureSequence& seq, const AnatomyWeights& anatomy_w,
                           const PathologyWeights& pathology_w, const AnatomyPrototypes& protos,
                           const ModelDims& dims, std::size_t stride);

}  // namespace gtn
