#include "gtn/anatomy.hpp"

#include "gtn/error.hpp"

namespace gtn {

double WindowContext::ratio() const {
  require(total > 0 && start <= total, Errc::invalid_argument, "window context: need 0 <= start <= total, total > 0");
  return static_cast<double>(start) / static_cast<double>(total);
}

Matrix gps_inject(const Matrix& h, const WindowContext& ctx, const std::vector<Dense>& gps_mlp) {
  const Matrix r(1, 1, static_cast<float>(ctx.ratio()));
  return add_row(h, mlp_forward(r, gps_mlp));
}

Matrix anatomy_forward(const Matrix& cls, const WindowContext& ctx, const AnatomyWeights& w, const ModelDims& dims) {
  const std::size_t T = cls.rows();
  require(T >= 1, Errc::invalid_argument, "anatomy_forward: empty window");
  if (T > w.pos_emb.rows()) {
    fail(Errc::shape_mismatch, "window of " + std::to_string(T) + " frames exceeds positional embedding length " +
                                   std::to_string(w.pos_emb.rows()));
  }
  Matrix x = dense_forward(cls, w.in_proj);
  x = add(x, w.pos_emb.slice_rows(0, T));
  x = add(x, dense_forward(cls_motion(cls), w.motion_proj));
  for (const auto& layer : w.attn) x = windowed_self_attention(x, layer, dims.attn_radius, dims.heads);
  x = dual_graph_gcn(x, w.gcn, dims.gcn_k, dims.gcn_radius);
  x = gps_inject(x, ctx, w.gps_mlp);
  x = bidirectional_mamba(x, w.scan_fwd, w.scan_bwd, w.gate, w.merge);
  return dense_forward(x, w.head);
}

}  // namespace gtn
