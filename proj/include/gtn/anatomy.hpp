#pragma once

#include "gtn/layers.hpp"
#include "gtn/model.hpp"

namespace gtn {

/// Position of a window inside its video; r = start / total.
struct WindowContext {
  std::size_t start = 0;
  std::size_t total = 1;

  double ratio() const;
};

/// Broadcast-adds MLP(r) to every frame.
Matrix gps_inject(const Matrix& h, const WindowContext& ctx, const std::vector<Dense>& gps_mlp);

/// Anatomy branch on one window of CLS features (T x cls_dim) -> T x 8 logits.
Matrix anatomy_forward(const Matrix& cls, const WindowContext& ctx, const AnatomyWeights& w, const ModelDims& dims);

}  // namespace gtn
