#pragma once

#include <cmath>
#include <vector>

#include "gtn/tensor.hpp"

namespace gtn {

// Dense kernels. All are pure; outputs are checked for NaN/Inf and a
// non-finite result raises Errc::non_finite. Summation order is fixed
// (ascending inner index) so results are reproducible for a given build.

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
BasicMatrix<T> row_softmax(const BasicMatrix<T>& m);

template <typename T>
BasicMatrix<T> add(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

/// Adds a 1 x cols row vector to every row.
template <typename T>
BasicMatrix<T> add_row(const BasicMatrix<T>& a, const BasicMatrix<T>& row);

template <typename T>
BasicMatrix<T> hadamard(const BasicMatrix<T>& a, const BasicMatrix<T>& b);

template <typename T>
BasicMatrix<T> concat_cols(const std::vector<const BasicMatrix<T>*>& parts);

template <typename T>
BasicMatrix<T> reverse_rows(const BasicMatrix<T>& m);

/// Per-row layer normalization without affine parameters (eps = 1e-5).
template <typename T>
BasicMatrix<T> layer_norm(const BasicMatrix<T>& m, T eps = T(1e-5));

template <typename T>
void check_finite(const BasicMatrix<T>& m, const char* where);

template <typename T>
T gelu(T x) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(k * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T softplus(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

template <typename T>
T silu(T x) {
  return x * sigmoid(x);
}

template <typename T, typename F>
BasicMatrix<T> map(const BasicMatrix<T>& m, F f) {
  BasicMatrix<T> out(m.rows(), m.cols());
  auto src = m.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

enum class Activation { gelu, relu, identity };

/// Affine layer: x * weight + bias, weight in x out, bias 1 x out.
template <typename T>
struct BasicDense {
  BasicMatrix<T> weight;
  BasicMatrix<T> bias;
};
using Dense = BasicDense<float>;

template <typename T>
BasicMatrix<T> dense_forward(const BasicMatrix<T>& x, const BasicDense<T>& layer);

/// Alternating affine + activation; no activation after the last layer.
template <typename T>
BasicMatrix<T> mlp_forward(const BasicMatrix<T>& x, const std::vector<BasicDense<T>>& layers,
                           Activation act = Activation::gelu);

}  // namespace gtn
