#include "gtn/kernels.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace gtn {

template <typename T>
void check_finite(const BasicMatrix<T>& m, const char* where) {
  for (T v : m.values()) {
    if (!std::isfinite(v)) fail(Errc::non_finite, std::string("non-finite value in ") + where);
  }
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    fail(Errc::shape_mismatch, "matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                   " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  const std::size_t n = a.rows();
  const std::size_t inner = a.cols();
  const std::size_t m = b.cols();
  BasicMatrix<T> out(n, m);
  // i-k-j order: each out(i, j) still accumulates over ascending k.
  for (std::size_t i = 0; i < n; ++i) {
    T* orow = out.row(i).data();
    const T* arow = a.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const T aik = arow[k];
      const T* brow = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) orow[j] += aik * brow[j];
    }
  }
  check_finite(out, "matmul");
  return out;
}

template <typename T>
BasicMatrix<T> row_softmax(const BasicMatrix<T>& m) {
  check_finite(m, "row_softmax input");
  BasicMatrix<T> out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto dst = out.row(r);
    if (in.empty()) continue;
    const T mx = *std::max_element(in.begin(), in.end());
    T sum = 0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - mx);
      sum += dst[c];
    }
    for (auto& v : dst) v /= sum;
  }
  return out;
}

template <typename T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::shape_mismatch, "add: shape mismatch");
  BasicMatrix<T> out = a;
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  check_finite(out, "add");
  return out;
}

template <typename T>
BasicMatrix<T> add_row(const BasicMatrix<T>& a, const BasicMatrix<T>& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), Errc::shape_mismatch, "add_row: shape mismatch");
  BasicMatrix<T> out = a;
  auto r = row.row(0);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += r[c];
  }
  check_finite(out, "add_row");
  return out;
}

template <typename T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::shape_mismatch, "hadamard: shape mismatch");
  BasicMatrix<T> out = a;
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= src[i];
  check_finite(out, "hadamard");
  return out;
}

template <typename T>
BasicMatrix<T> concat_cols(const std::vector<const BasicMatrix<T>*>& parts) {
  require(!parts.empty(), Errc::shape_mismatch, "concat_cols: no inputs");
  const std::size_t rows = parts.front()->rows();
  std::size_t cols = 0;
  for (const auto* p : parts) {
    require(p->rows() == rows, Errc::shape_mismatch, "concat_cols: row count mismatch");
    cols += p->cols();
  }
  BasicMatrix<T> out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r);
    std::size_t off = 0;
    for (const auto* p : parts) {
      auto src = p->row(r);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(off));
      off += src.size();
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> reverse_rows(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(m.rows() - 1 - r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

template <typename T>
BasicMatrix<T> layer_norm(const BasicMatrix<T>& m, T eps) {
  BasicMatrix<T> out(m.rows(), m.cols());
  const T n = static_cast<T>(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto in = m.row(r);
    auto dst = out.row(r);
    T mean = 0;
    for (T v : in) mean += v;
    mean /= n;
    T var = 0;
    for (T v : in) var += (v - mean) * (v - mean);
    var /= n;
    const T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < in.size(); ++c) dst[c] = (in[c] - mean) * inv;
  }
  check_finite(out, "layer_norm");
  return out;
}

template <typename T>
BasicMatrix<T> dense_forward(const BasicMatrix<T>& x, const BasicDense<T>& layer) {
  BasicMatrix<T> y = matmul(x, layer.weight);
  if (!layer.bias.empty()) y = add_row(y, layer.bias);
  return y;
}

template <typename T>
BasicMatrix<T> mlp_forward(const BasicMatrix<T>& x, const std::vector<BasicDense<T>>& layers, Activation act) {
  BasicMatrix<T> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = dense_forward(h, layers[i]);
    if (i + 1 == layers.size()) break;
    switch (act) {
      case Activation::gelu: h = map(h, [](T v) { return gelu(v); }); break;
      case Activation::relu: h = map(h, [](T v) { return v > T(0) ? v : T(0); }); break;
      case Activation::identity: break;
    }
  }
  return h;
}

#define GTN_INSTANTIATE(T)                                                                            \
  template void check_finite<T>(const BasicMatrix<T>&, const char*);                                  \
  template BasicMatrix<T> matmul<T>(const BasicMatrix<T>&, const BasicMatrix<T>&);                    \
  template BasicMatrix<T> row_softmax<T>(const BasicMatrix<T>&);                                      \
  template BasicMatrix<T> add<T>(const BasicMatrix<T>&, const BasicMatrix<T>&);                       \
  template BasicMatrix<T> add_row<T>(const BasicMatrix<T>&, const BasicMatrix<T>&);                   \
  template BasicMatrix<T> hadamard<T>(const BasicMatrix<T>&, const BasicMatrix<T>&);                  \
  template BasicMatrix<T> concat_cols<T>(const std::vector<const BasicMatrix<T>*>&);                  \
  template BasicMatrix<T> reverse_rows<T>(const BasicMatrix<T>&);                                     \
  template BasicMatrix<T> layer_norm<T>(const BasicMatrix<T>&, T);                                    \
  template BasicMatrix<T> dense_forward<T>(const BasicMatrix<T>&, const BasicDense<T>&);              \
  template BasicMatrix<T> mlp_forward<T>(const BasicMatrix<T>&, const std::vector<BasicDense<T>>&,    \
                                         Activation);

GTN_INSTANTIATE(float)
GTN_INSTANTIATE(double)

#undef GTN_INSTANTIATE

}  // namespace gtn
