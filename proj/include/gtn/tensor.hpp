#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "gtn/error.hpp"

namespace gtn {

/// Dense row-major matrix. Per-frame feature tracks are T x dim, weights are
/// in x out so that `x * W` is the affine map.
template <typename T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, Errc::shape_mismatch, "matrix data length != rows*cols");
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) & { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const& { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const&& = delete;  // would dangle

  std::span<T> values() & { return data_; }
  std::span<const T> values() const& { return data_; }
  std::span<const T> values() const&& = delete;
  const std::vector<T>& storage() const noexcept { return data_; }

  /// Rows [begin, end) as a new matrix.
  BasicMatrix slice_rows(std::size_t begin, std::size_t end) const {
    require(begin <= end && end <= rows_, Errc::shape_mismatch, "row slice out of range");
    return BasicMatrix(end - begin, cols_,
                       std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                                      data_.begin() + static_cast<std::ptrdiff_t>(end * cols_)));
  }

  template <typename U>
  BasicMatrix<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return BasicMatrix<U>(rows_, cols_, std::move(out));
  }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

}  // namespace gtn
