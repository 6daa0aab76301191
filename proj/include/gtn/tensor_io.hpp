#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gtn/tensor.hpp"

namespace gtn {

// TensorFile layout, little-endian:
//   bytes 0-7   magic "GTNV2TEN"
//   byte  8     dtype (0 = f32, 1 = f64, 2 = u8)
//   byte  9     ndim (<= 4)
//   then ndim x u64 shape, then the payload.

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

std::size_t dtype_size(DType d);

/// Untyped tensor as stored on disk. Payload is kept in host order.
struct RawTensor {
  DType dtype = DType::f32;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> payload;

  friend bool operator==(const RawTensor&, const RawTensor&) = default;
};

std::vector<std::uint8_t> encode_tensor(const RawTensor& t);
RawTensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_raw_tensor(const std::filesystem::path& path, const RawTensor& t);
RawTensor read_raw_tensor(const std::filesystem::path& path);

/// Matrices are stored as 2-D tensors. Loading requires the stored dtype to
/// match T; a 1-D tensor loads as a single row.
template <typename T>
void save_tensor(const std::filesystem::path& path, const BasicMatrix<T>& m);

template <typename T = float>
BasicMatrix<T> load_tensor(const std::filesystem::path& path);

}  // namespace gtn
