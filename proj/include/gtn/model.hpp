#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gtn/kernels.hpp"

namespace gtn {

/// Hidden sizes and graph/attention hyper-parameters shared by both branches.
struct ModelDims {
  std::size_t cls_dim = 1024;
  std::size_t patch_dim = 1024;
  std::size_t hidden = 512;
  std::size_t heads = 8;
  std::size_t attn_radius = 16;
  std::size_t gcn_k = 8;
  std::size_t gcn_radius = 5;
  std::size_t ssm_state = 16;
  std::size_t window = 512;  // positional embedding length
  std::size_t gps_hidden = 64;
  std::size_t cond_hidden = 64;
};

void validate(const ModelDims& dims);

enum class ParamKind { weight, bias, embedding, decay_log, skip, delta_bias };

struct AttentionWeights {
  Matrix query, key, value, output;  // hidden x hidden each
};

struct GcnWeights {
  Matrix sim;   // hidden x hidden
  Matrix dist;  // hidden x hidden
  Dense proj;   // 2*hidden -> hidden
};

/// Diagonal selective state-space block. Decay A = -exp(a_log) per
/// (channel, state); delta, B and C are linear functions of the input frame.
struct SsmBlock {
  Dense delta;    // hidden -> hidden, passed through softplus
  Matrix b_proj;  // hidden x state
  Matrix c_proj;  // hidden x state
  Matrix a_log;   // hidden x state
  Matrix d_skip;  // 1 x hidden
};

struct AnatomyWeights {
  Dense in_proj;       // cls_dim -> hidden
  Matrix pos_emb;      // window x hidden
  Dense motion_proj;   // cls_dim -> hidden
  std::array<AttentionWeights, 2> attn;
  GcnWeights gcn;
  std::vector<Dense> gps_mlp;  // 1 -> gps_hidden -> hidden
  SsmBlock scan_fwd;
  SsmBlock scan_bwd;
  Dense gate;   // hidden -> hidden
  Dense merge;  // 2*hidden -> hidden
  Dense head;   // hidden -> 8

  /// Calls f(name, matrix, kind) for every parameter tensor in a fixed order.
  template <typename Self, typename F>
  static void visit(Self& w, F&& f);
};

struct PathologyWeights {
  Matrix dev_proj;      // patch_dim x hidden, no bias
  Matrix motion_proj;   // patch_dim x hidden, no bias
  Matrix content_proj;  // patch_dim x hidden, no bias
  GcnWeights gcn;
  Matrix dw_kernel;  // hidden x 5
  Matrix pointwise;  // hidden x hidden
  SsmBlock scan;
  Dense fuse;                   // 3*hidden -> hidden
  std::vector<Dense> cond_mlp;  // 8 -> cond_hidden -> hidden
  Dense head;                   // hidden -> 9

  template <typename Self, typename F>
  static void visit(Self& w, F&& f);
};

/// Correctly shaped, all-zero parameter sets.
AnatomyWeights zero_anatomy_weights(const ModelDims& dims);
PathologyWeights zero_pathology_weights(const ModelDims& dims);

/// Xavier-uniform weights, zero biases, Mamba-style decay/skip/step init.
AnatomyWeights init_anatomy_weights(const ModelDims& dims, std::uint64_t seed);
PathologyWeights init_pathology_weights(const ModelDims& dims, std::uint64_t seed);

// Manifest: <dir>/<branch>.json lists name -> tensor file + shape; tensors
// live under <dir>/<branch>/<name>.ten.
void save_weights(const std::filesystem::path& dir, const ModelDims& dims, const AnatomyWeights& w);
void save_weights(const std::filesystem::path& dir, const ModelDims& dims, const PathologyWeights& w);
AnatomyWeights load_anatomy_weights(const std::filesystem::path& dir, const ModelDims& dims);
PathologyWeights load_pathology_weights(const std::filesystem::path& dir, const ModelDims& dims);

// ---------------------------------------------------------------------------

namespace detail {
template <typename M, typename F>
void visit_dense(const std::string& name, M& d, F& f) {
  f(name + ".weight", d.weight, ParamKind::weight);
  f(name + ".bias", d.bias, ParamKind::bias);
}
template <typename G, typename F>
void visit_gcn(const std::string& name, G& g, F& f) {
  f(name + ".sim", g.sim, ParamKind::weight);
  f(name + ".dist", g.dist, ParamKind::weight);
  visit_dense(name + ".proj", g.proj, f);
}
template <typename S, typename F>
void visit_ssm(const std::string& name, S& s, F& f) {
  f(name + ".delta.weight", s.delta.weight, ParamKind::weight);
  f(name + ".delta.bias", s.delta.bias, ParamKind::delta_bias);
  f(name + ".b_proj", s.b_proj, ParamKind::weight);
  f(name + ".c_proj", s.c_proj, ParamKind::weight);
  f(name + ".a_log", s.a_log, ParamKind::decay_log);
  f(name + ".d_skip", s.d_skip, ParamKind::skip);
}
}  // namespace detail

template <typename Self, typename F>
void AnatomyWeights::visit(Self& w, F&& f) {
  detail::visit_dense("in_proj", w.in_proj, f);
  f(std::string("pos_emb"), w.pos_emb, ParamKind::embedding);
  detail::visit_dense("motion_proj", w.motion_proj, f);
  for (std::size_t i = 0; i < w.attn.size(); ++i) {
    const std::string p = "attn" + std::to_string(i);
    f(p + ".query", w.attn[i].query, ParamKind::weight);
    f(p + ".key", w.attn[i].key, ParamKind::weight);
    f(p + ".value", w.attn[i].value, ParamKind::weight);
    f(p + ".output", w.attn[i].output, ParamKind::weight);
  }
  detail::visit_gcn("gcn", w.gcn, f);
  for (std::size_t i = 0; i < w.gps_mlp.size(); ++i) detail::visit_dense("gps" + std::to_string(i), w.gps_mlp[i], f);
  detail::visit_ssm("scan_fwd", w.scan_fwd, f);
  detail::visit_ssm("scan_bwd", w.scan_bwd, f);
  detail::visit_dense("gate", w.gate, f);
  detail::visit_dense("merge", w.merge, f);
  detail::visit_dense("head", w.head, f);
}

template <typename Self, typename F>
void PathologyWeights::visit(Self& w, F&& f) {
  f(std::string("dev_proj"), w.dev_proj, ParamKind::weight);
  f(std::string("motion_proj"), w.motion_proj, ParamKind::weight);
  f(std::string("content_proj"), w.content_proj, ParamKind::weight);
  detail::visit_gcn("gcn", w.gcn, f);
  f(std::string("dw_kernel"), w.dw_kernel, ParamKind::weight);
  f(std::string("pointwise"), w.pointwise, ParamKind::weight);
  detail::visit_ssm("scan", w.scan, f);
  detail::visit_dense("fuse", w.fuse, f);
  for (std::size_t i = 0; i < w.cond_mlp.size(); ++i) detail::visit_dense("cond" + std::to_string(i), w.cond_mlp[i], f);
  detail::visit_dense("head", w.head, f);
}

}  // namespace gtn
