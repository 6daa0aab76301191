#pragma once

#include "gtn/model.hpp"

namespace gtn {

/// out[t] = m[t] - m[t-1], out[0] = 0. Used for both the CLS and patch
/// motion signals.
Matrix frame_motion(const Matrix& m);
inline Matrix cls_motion(const Matrix& cls) { return frame_motion(cls); }
inline Matrix patch_motion(const Matrix& patch) { return frame_motion(patch); }

/// Multi-head self-attention where frame t sees frames within +-radius,
/// wrapped in a post-norm residual: layer_norm(h + attn(h) * W_out).
Matrix windowed_self_attention(const Matrix& h, const AttentionWeights& w, std::size_t radius, std::size_t heads);

/// Dense T x T attention weights of one head (zeros outside the band).
Matrix attention_weights(const Matrix& h, const AttentionWeights& w, std::size_t radius, std::size_t heads,
                         std::size_t head);

/// Cosine top-k graph: neighbours (self excluded) weighted by max(cos, 0),
/// self-loop weight 1, rows normalized. Ties keep the smaller frame index.
Matrix similarity_adjacency(const Matrix& h, std::size_t k);

/// Band graph: A_ij = 1 iff |i - j| <= radius, rows normalized.
Matrix distance_adjacency(std::size_t frames, std::size_t radius);

/// h + proj([GELU(A_sim h W_sim) || GELU(A_dist h W_dist)]).
Matrix dual_graph_gcn(const Matrix& h, const GcnWeights& w, std::size_t k, std::size_t radius);

/// Frame-dependent scan inputs: step (T x D, positive), B and C (T x S).
template <typename T>
struct ScanInputs {
  BasicMatrix<T> delta;
  BasicMatrix<T> b;
  BasicMatrix<T> c;
};

/// Sequential diagonal recurrence
///   h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * x_t,
///   y_t = <C_t, h_t> + d_skip * x_t,
/// with A (D x S, negative) and d_skip (1 x D).
template <typename T>
BasicMatrix<T> scan_sequential(const BasicMatrix<T>& x, const ScanInputs<T>& in, const BasicMatrix<T>& decay,
                               const BasicMatrix<T>& d_skip);

/// Same recurrence evaluated chunk by chunk: inside a chunk every state is
/// formed from the carried state and all chunk inputs through cumulative
/// log-decays, so no per-step product chain is shared with the sequential form.
template <typename T>
BasicMatrix<T> scan_chunked(const BasicMatrix<T>& x, const ScanInputs<T>& in, const BasicMatrix<T>& decay,
                            const BasicMatrix<T>& d_skip, std::size_t chunk);

ScanInputs<float> scan_inputs(const Matrix& x, const SsmBlock& blk);
Matrix ssm_decay(const SsmBlock& blk);

enum class ScanDirection { forward, backward };

/// Selective scan of x; the backward direction scans the time-reversed
/// sequence and reverses the result.
Matrix selective_scan(const Matrix& x, const SsmBlock& blk, ScanDirection dir);

/// h + (merge([scan_fwd(h) || scan_bwd(h)])) * SiLU(gate(h)).
Matrix bidirectional_mamba(const Matrix& h, const SsmBlock& fwd, const SsmBlock& bwd, const Dense& gate,
                           const Dense& merge);

/// Depthwise temporal conv (kernel 5, zero padding 2) then pointwise mixing.
Matrix ds_conv1d(const Matrix& h, const Matrix& dw_kernel, const Matrix& pointwise);

}  // namespace gtn
