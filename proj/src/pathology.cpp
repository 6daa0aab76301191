#include "gtn/pathology.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gtn/error.hpp"
#include "gtn/tensor_io.hpp"

namespace gtn {

void PrototypeFitter::add(const Matrix& patch, const GroundTruthTrack& gt) {
  require(patch.rows() == gt.frames(), Errc::label_mismatch, "prototype fit: feature/label frame count mismatch");
  if (sums_.empty()) {
    dim_ = patch.cols();
    sums_.assign(kNumAnatomy * dim_, 0.0);
  }
  require(patch.cols() == dim_, Errc::shape_mismatch, "prototype fit: patch dimension changed between videos");
  for (std::size_t t = 0; t < gt.frames(); ++t) {
    if (!gt.healthy(t)) continue;
    const std::size_t a = gt.anatomy[t];
    double* dst = sums_.data() + a * dim_;
    auto src = patch.row(t);
    for (std::size_t j = 0; j < dim_; ++j) dst[j] += src[j];
    ++support_[a];
  }
}

AnatomyPrototypes PrototypeFitter::finish() const {
  std::size_t total = 0;
  for (auto s : support_) total += s;
  if (total == 0) fail(Errc::no_healthy_frames, "no healthy frames to fit prototypes");
  std::vector<double> global(dim_, 0.0);
  for (std::size_t a = 0; a < kNumAnatomy; ++a) {
    for (std::size_t j = 0; j < dim_; ++j) global[j] += sums_[a * dim_ + j];
  }
  AnatomyPrototypes out;
  out.prototypes = Matrix(kNumAnatomy, dim_);
  out.support = support_;
  for (std::size_t a = 0; a < kNumAnatomy; ++a) {
    auto dst = out.prototypes.row(a);
    for (std::size_t j = 0; j < dim_; ++j) {
      dst[j] = support_[a] > 0 ? static_cast<float>(sums_[a * dim_ + j] / static_cast<double>(support_[a]))
                               : static_cast<float>(global[j] / static_cast<double>(total));
    }
  }
  return out;
}

AnatomyPrototypes fit_prototypes(const std::vector<const Matrix*>& patches,
                                 const std::vector<const GroundTruthTrack*>& truths) {
  require(patches.size() == truths.size(), Errc::invalid_argument, "fit_prototypes: video count mismatch");
  PrototypeFitter fitter;
  for (std::size_t i = 0; i < patches.size(); ++i) fitter.add(*patches[i], *truths[i]);
  return fitter.finish();
}

void save_prototypes(const std::filesystem::path& dir, const AnatomyPrototypes& p) {
  save_tensor(dir / "prototypes.ten", p.prototypes);
  nlohmann::ordered_json j;
  j["support"] = p.support;
  j["classes"] = kAnatomyNames;
  std::ofstream f(dir / "prototypes.json", std::ios::trunc);
  if (!f) fail(Errc::io, "cannot write prototypes.json in " + dir.string());
  f << j.dump(2) << '\n';
}

AnatomyPrototypes load_prototypes(const std::filesystem::path& dir) {
  AnatomyPrototypes p;
  p.prototypes = load_tensor<float>(dir / "prototypes.ten");
  require(p.prototypes.rows() == kNumAnatomy, Errc::shape_mismatch, "prototypes.ten must have 8 rows");
  std::ifstream f(dir / "prototypes.json");
  if (!f) fail(Errc::io, "missing prototypes.json in " + dir.string());
  try {
    p.support = nlohmann::json::parse(f).at("support").get<std::array<std::size_t, kNumAnatomy>>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse, std::string("prototypes.json: ") + e.what());
  }
  return p;
}

Matrix deviation_signal(const Matrix& patch, const Matrix& anatomy_probs, const AnatomyPrototypes& protos) {
  require(anatomy_probs.rows() == patch.rows() && anatomy_probs.cols() == kNumAnatomy, Errc::shape_mismatch,
          "deviation_signal: probs must be T x 8");
  require(protos.prototypes.cols() == patch.cols(), Errc::shape_mismatch,
          "deviation_signal: prototype and patch dimensions differ");
  for (std::size_t t = 0; t < anatomy_probs.rows(); ++t) {
    double s = 0;
    for (float v : anatomy_probs.row(t)) s += v;
    if (std::abs(s - 1.0) > 1e-4) {
      fail(Errc::invalid_argument, "deviation_signal: anatomy probabilities at frame " + std::to_string(t) +
                                       " sum to " + std::to_string(s));
    }
  }
  const Matrix expected = matmul(anatomy_probs, protos.prototypes);
  Matrix out = patch;
  auto dst = out.values();
  auto e = expected.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= e[i];
  return out;
}

Matrix pathology_temporal(const Matrix& h, const PathologyWeights& w, const ModelDims& dims) {
  const Matrix g = dual_graph_gcn(h, w.gcn, dims.gcn_k, dims.gcn_radius);
  const Matrix c = ds_conv1d(g, w.dw_kernel, w.pointwise);
  const Matrix m = selective_scan(c, w.scan, ScanDirection::forward);
  return add(add(c, m), g);
}

Matrix pathology_fused(const Matrix& patch, const Matrix& anatomy_logits, const AnatomyPrototypes& protos,
                       const PathologyWeights& w, const ModelDims& dims) {
  require(anatomy_logits.rows() == patch.rows(), Errc::shape_mismatch,
          "pathology_forward: anatomy logits and patch window lengths differ");
  const Matrix dev = matmul(deviation_signal(patch, row_softmax(anatomy_logits), protos), w.dev_proj);
  const Matrix motion = matmul(patch_motion(patch), w.motion_proj);
  const Matrix content = pathology_temporal(add(matmul(patch, w.content_proj), motion), w, dims);
  const Matrix fused = dense_forward(concat_cols<float>({&dev, &motion, &content}), w.fuse);
  return add(fused, mlp_forward(anatomy_logits, w.cond_mlp));
}

Matrix pathology_forward(const Matrix& patch, const Matrix& anatomy_logits, const AnatomyPrototypes& protos,
                         const PathologyWeights& w, const ModelDims& dims) {
  return dense_forward(pathology_fused(patch, anatomy_logits, protos, w, dims), w.head);
}

}  // namespace gtn
