#include "gtn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gtn/error.hpp"

namespace gtn {
namespace {

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  }
  return out;
}

// Softmax weights of frame t over its band for one head, written to `w`
// (length hi - lo + 1).
void band_softmax(const Matrix& q, const Matrix& k, std::size_t t, std::size_t lo, std::size_t hi, std::size_t off,
                  std::size_t dh, float scale, std::vector<float>& w) {
  w.resize(hi - lo + 1);
  const float* qt = q.row(t).data() + off;
  float mx = -INFINITY;
  for (std::size_t j = lo; j <= hi; ++j) {
    const float* kj = k.row(j).data() + off;
    float s = 0;
    for (std::size_t c = 0; c < dh; ++c) s += qt[c] * kj[c];
    s *= scale;
    w[j - lo] = s;
    mx = std::max(mx, s);
  }
  float sum = 0;
  for (auto& v : w) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : w) v /= sum;
}

void check_heads(std::size_t hidden, std::size_t heads) {
  require(heads >= 1 && hidden % heads == 0, Errc::shape_mismatch, "attention: hidden not divisible by heads");
}

}  // namespace

Matrix frame_motion(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t t = 1; t < m.rows(); ++t) {
    auto cur = m.row(t);
    auto prev = m.row(t - 1);
    auto dst = out.row(t);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = cur[c] - prev[c];
  }
  check_finite(out, "frame_motion");
  return out;
}

Matrix windowed_self_attention(const Matrix& h, const AttentionWeights& w, std::size_t radius, std::size_t heads) {
  const std::size_t T = h.rows();
  const std::size_t d = h.cols();
  check_heads(d, heads);
  const Matrix q = matmul(h, w.query);
  const Matrix k = matmul(h, w.key);
  const Matrix v = matmul(h, w.value);
  const std::size_t dh = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Matrix ctx(T, d);
  std::vector<float> wts;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t lo = t > radius ? t - radius : 0;
    const std::size_t hi = std::min(T - 1, t + radius);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t off = hd * dh;
      band_softmax(q, k, t, lo, hi, off, dh, scale, wts);
      float* dst = ctx.row(t).data() + off;
      for (std::size_t j = lo; j <= hi; ++j) {
        const float a = wts[j - lo];
        const float* vj = v.row(j).data() + off;
        for (std::size_t c = 0; c < dh; ++c) dst[c] += a * vj[c];
      }
    }
  }
  return layer_norm(add(h, matmul(ctx, w.output)));
}

Matrix attention_weights(const Matrix& h, const AttentionWeights& w, std::size_t radius, std::size_t heads,
                         std::size_t head) {
  const std::size_t T = h.rows();
  check_heads(h.cols(), heads);
  require(head < heads, Errc::invalid_argument, "head index out of range");
  const Matrix q = matmul(h, w.query);
  const Matrix k = matmul(h, w.key);
  const std::size_t dh = h.cols() / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Matrix out(T, T);
  std::vector<float> wts;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t lo = t > radius ? t - radius : 0;
    const std::size_t hi = std::min(T - 1, t + radius);
    band_softmax(q, k, t, lo, hi, head * dh, dh, scale, wts);
    for (std::size_t j = lo; j <= hi; ++j) out(t, j) = wts[j - lo];
  }
  return out;
}

Matrix similarity_adjacency(const Matrix& h, std::size_t k) {
  require(k >= 1, Errc::invalid_argument, "similarity_adjacency: k must be >= 1");
  const std::size_t T = h.rows();
  std::vector<float> norm(T);
  for (std::size_t t = 0; t < T; ++t) {
    float s = 0;
    for (float v : h.row(t)) s += v * v;
    norm[t] = std::sqrt(s);
  }
  const Matrix gram = matmul(h, transpose(h));
  Matrix adj(T, T);
  std::vector<std::size_t> idx;
  std::vector<float> sim(T);
  for (std::size_t i = 0; i < T; ++i) {
    idx.clear();
    for (std::size_t j = 0; j < T; ++j) {
      float s = 0;
      if (j != i && norm[i] > 0 && norm[j] > 0) s = std::clamp(gram(i, j) / (norm[i] * norm[j]), 0.0f, 1.0f);
      sim[j] = s;
      if (j != i) idx.push_back(j);
    }
    const std::size_t keep = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                      [&](std::size_t a, std::size_t b) { return sim[a] > sim[b] || (sim[a] == sim[b] && a < b); });
    adj(i, i) = 1.0f;
    float total = 1.0f;
    for (std::size_t n = 0; n < keep; ++n) {
      adj(i, idx[n]) = sim[idx[n]];
      total += sim[idx[n]];
    }
    for (auto& v : adj.row(i)) v /= total;
  }
  return adj;
}

Matrix distance_adjacency(std::size_t frames, std::size_t radius) {
  Matrix adj(frames, frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::size_t lo = i > radius ? i - radius : 0;
    const std::size_t hi = std::min(frames - 1, i + radius);
    const float w = 1.0f / static_cast<float>(hi - lo + 1);
    for (std::size_t j = lo; j <= hi; ++j) adj(i, j) = w;
  }
  return adj;
}

Matrix dual_graph_gcn(const Matrix& h, const GcnWeights& w, std::size_t k, std::size_t radius) {
  const Matrix a_sim = similarity_adjacency(h, k);
  const Matrix a_dist = distance_adjacency(h.rows(), radius);
  const auto act = [](float v) { return gelu(v); };
  const Matrix g_sim = map(matmul(matmul(a_sim, h), w.sim), act);
  const Matrix g_dist = map(matmul(matmul(a_dist, h), w.dist), act);
  return add(h, dense_forward(concat_cols<float>({&g_sim, &g_dist}), w.proj));
}

template <typename T>
BasicMatrix<T> scan_sequential(const BasicMatrix<T>& x, const ScanInputs<T>& in, const BasicMatrix<T>& decay,
                               const BasicMatrix<T>& d_skip) {
  const std::size_t len = x.rows();
  const std::size_t D = x.cols();
  const std::size_t S = decay.cols();
  require(in.delta.rows() == len && in.delta.cols() == D && in.b.rows() == len && in.b.cols() == S &&
              in.c.rows() == len && in.c.cols() == S && decay.rows() == D && d_skip.cols() == D,
          Errc::shape_mismatch, "scan: inconsistent shapes");
  BasicMatrix<T> y(len, D);
  std::vector<T> state(D * S, T(0));
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      const T dt = in.delta(t, d);
      const T xt = x(t, d);
      T* hs = state.data() + d * S;
      T acc = 0;
      for (std::size_t s = 0; s < S; ++s) {
        hs[s] = std::exp(dt * decay(d, s)) * hs[s] + dt * in.b(t, s) * xt;
        acc += in.c(t, s) * hs[s];
      }
      y(t, d) = acc + d_skip(0, d) * xt;
    }
  }
  check_finite(y, "scan_sequential");
  return y;
}

template <typename T>
BasicMatrix<T> scan_chunked(const BasicMatrix<T>& x, const ScanInputs<T>& in, const BasicMatrix<T>& decay,
                            const BasicMatrix<T>& d_skip, std::size_t chunk) {
  require(chunk >= 1, Errc::invalid_argument, "scan_chunked: chunk must be >= 1");
  const std::size_t len = x.rows();
  const std::size_t D = x.cols();
  const std::size_t S = decay.cols();
  require(in.delta.rows() == len && in.delta.cols() == D && in.b.rows() == len && in.b.cols() == S &&
              in.c.rows() == len && in.c.cols() == S && decay.rows() == D && d_skip.cols() == D,
          Errc::shape_mismatch, "scan: inconsistent shapes");
  BasicMatrix<T> y(len, D);
  std::vector<T> carry(D * S, T(0));
  std::vector<T> logdecay(chunk);
  std::vector<T> next(D * S);
  for (std::size_t c0 = 0; c0 < len; c0 += chunk) {
    const std::size_t c1 = std::min(len, c0 + chunk);
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t s = 0; s < S; ++s) {
        T cum = 0;
        for (std::size_t t = c0; t < c1; ++t) {
          cum += in.delta(t, d) * decay(d, s);
          logdecay[t - c0] = cum;
        }
        for (std::size_t t = c0; t < c1; ++t) {
          const T lt = logdecay[t - c0];
          T h = std::exp(lt) * carry[d * S + s];
          for (std::size_t j = c0; j <= t; ++j) {
            h += std::exp(lt - logdecay[j - c0]) * in.delta(j, d) * in.b(j, s) * x(j, d);
          }
          y(t, d) += in.c(t, s) * h;
          if (t + 1 == c1) next[d * S + s] = h;
        }
      }
      for (std::size_t t = c0; t < c1; ++t) y(t, d) += d_skip(0, d) * x(t, d);
    }
    carry.swap(next);
  }
  check_finite(y, "scan_chunked");
  return y;
}

template BasicMatrix<float> scan_sequential(const BasicMatrix<float>&, const ScanInputs<float>&,
                                            const BasicMatrix<float>&, const BasicMatrix<float>&);
template BasicMatrix<double> scan_sequential(const BasicMatrix<double>&, const ScanInputs<double>&,
                                             const BasicMatrix<double>&, const BasicMatrix<double>&);
template BasicMatrix<float> scan_chunked(const BasicMatrix<float>&, const ScanInputs<float>&,
                                         const BasicMatrix<float>&, const BasicMatrix<float>&, std::size_t);
template BasicMatrix<double> scan_chunked(const BasicMatrix<double>&, const ScanInputs<double>&,
                                          const BasicMatrix<double>&, const BasicMatrix<double>&, std::size_t);

ScanInputs<float> scan_inputs(const Matrix& x, const SsmBlock& blk) {
  ScanInputs<float> in;
  in.delta = map(dense_forward(x, blk.delta), [](float v) { return softplus(v); });
  check_finite(in.delta, "scan step");
  in.b = matmul(x, blk.b_proj);
  in.c = matmul(x, blk.c_proj);
  return in;
}

Matrix ssm_decay(const SsmBlock& blk) {
  return map(blk.a_log, [](float v) { return -std::exp(v); });
}

Matrix selective_scan(const Matrix& x, const SsmBlock& blk, ScanDirection dir) {
  if (dir == ScanDirection::backward) {
    const Matrix rev = reverse_rows(x);
    return reverse_rows(scan_sequential(rev, scan_inputs(rev, blk), ssm_decay(blk), blk.d_skip));
  }
  return scan_sequential(x, scan_inputs(x, blk), ssm_decay(blk), blk.d_skip);
}

Matrix bidirectional_mamba(const Matrix& h, const SsmBlock& fwd, const SsmBlock& bwd, const Dense& gate,
                           const Dense& merge) {
  const Matrix f = selective_scan(h, fwd, ScanDirection::forward);
  const Matrix b = selective_scan(h, bwd, ScanDirection::backward);
  const Matrix merged = dense_forward(concat_cols<float>({&f, &b}), merge);
  const Matrix g = map(dense_forward(h, gate), [](float v) { return silu(v); });
  return add(h, hadamard(merged, g));
}

Matrix ds_conv1d(const Matrix& h, const Matrix& dw_kernel, const Matrix& pointwise) {
  if (dw_kernel.cols() != 5) fail(Errc::shape_mismatch, "ds_conv1d: depthwise kernel length must be 5");
  require(dw_kernel.rows() == h.cols(), Errc::shape_mismatch, "ds_conv1d: kernel channel count mismatch");
  const std::size_t T = h.rows();
  const std::size_t C = h.cols();
  Matrix u(T, C);
  for (std::size_t t = 0; t < T; ++t) {
    auto dst = u.row(t);
    for (std::size_t j = 0; j < 5; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(j) - 2;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      auto in = h.row(static_cast<std::size_t>(src));
      for (std::size_t c = 0; c < C; ++c) dst[c] += dw_kernel(c, j) * in[c];
    }
  }
  return matmul(u, pointwise);
}

}  // namespace gtn
