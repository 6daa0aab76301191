#include "gtn/inference.hpp"

#include "gtn/error.hpp"

namespace gtn {

WindowLogits infer_windows(const FeatureSequence& seq, const AnatomyWeights& anatomy_w,
                           const PathologyWeights& pathology_w, const AnatomyPrototypes& protos,
                           const ModelDims& dims, std::size_t stride) {
  const std::size_t T = seq.frames();
  require(seq.patch.rows() == T, Errc::shape_mismatch, "cls and patch frame counts differ");
  require(seq.cls.cols() == dims.cls_dim && seq.patch.cols() == dims.patch_dim, Errc::shape_mismatch,
          "feature dimensions do not match the model");
  WindowLogits out;
  out.plan = window_plan(T, dims.window, stride);
  out.logits.reserve(out.plan.size());
  for (const auto& w : out.plan) {
    const Matrix cls = seq.cls.slice_rows(w.start, w.end);
    const Matrix patch = seq.patch.slice_rows(w.start, w.end);
    const Matrix anat = anatomy_forward(cls, WindowContext{w.start, T}, anatomy_w, dims);
    const Matrix path = pathology_forward(patch, anat, protos, pathology_w, dims);
    out.logits.push_back(concat_cols<float>({&anat, &path}));
  }
  return out;
}

}  // namespace gtn
