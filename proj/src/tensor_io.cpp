#include "gtn/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "gtn/error.hpp"

namespace gtn {
namespace {

constexpr char kMagic[8] = {'G', 'T', 'N', 'V', '2', 'T', 'E', 'N'};
constexpr std::size_t kHeaderFixed = 10;

void byteswap_inplace(std::uint8_t* p, std::size_t width) { std::reverse(p, p + width); }

// Converts between host order and little-endian, element by element.
void to_from_le(std::vector<std::uint8_t>& bytes, std::size_t width) {
  if constexpr (std::endian::native == std::endian::little) {
    return;
  } else {
    for (std::size_t i = 0; i + width <= bytes.size(); i += width) byteswap_inplace(bytes.data() + i, width);
  }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::f32;
  else if constexpr (std::is_same_v<T, double>) return DType::f64;
  else return DType::u8;
}

}  // namespace

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  fail(Errc::bad_dtype, "unknown dtype");
}

std::vector<std::uint8_t> encode_tensor(const RawTensor& t) {
  require(t.shape.size() <= 4, Errc::shape_overflow, "tensor ndim > 4");
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.shape.size()));
  for (auto s : t.shape) put_u64(out, s);
  std::vector<std::uint8_t> payload = t.payload;
  to_from_le(payload, dtype_size(t.dtype));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

RawTensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderFixed) fail(Errc::truncated, "tensor file shorter than header");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) fail(Errc::bad_magic, "bad magic");
  RawTensor t;
  const std::uint8_t code = bytes[8];
  if (code > 2) fail(Errc::bad_dtype, "unknown dtype code " + std::to_string(code));
  t.dtype = static_cast<DType>(code);
  const std::size_t ndim = bytes[9];
  if (ndim > 4) fail(Errc::shape_overflow, "tensor ndim > 4");
  if (bytes.size() < kHeaderFixed + 8 * ndim) fail(Errc::truncated, "truncated shape header");
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::uint64_t s = get_u64(bytes.data() + kHeaderFixed + 8 * i);
    if (s != 0 && count > std::numeric_limits<std::uint64_t>::max() / s) fail(Errc::shape_overflow, "shape product overflows");
    count *= s;
    t.shape.push_back(s);
  }
  const std::size_t width = dtype_size(t.dtype);
  if (count > std::numeric_limits<std::uint64_t>::max() / width) fail(Errc::shape_overflow, "payload size overflows");
  const std::uint64_t want = count * width;
  const std::size_t offset = kHeaderFixed + 8 * ndim;
  const std::uint64_t have = bytes.size() - offset;
  if (have < want) fail(Errc::truncated, "truncated payload");
  if (have > want) fail(Errc::shape_mismatch, "payload longer than shape implies");
  t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  to_from_le(t.payload, width);
  return t;
}

void write_raw_tensor(const std::filesystem::path& path, const RawTensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(Errc::io, "cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(Errc::io, "write failed: " + path.string());
}

RawTensor read_raw_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::io, "cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const BasicMatrix<T>& m) {
  RawTensor t;
  t.dtype = dtype_of<T>();
  t.shape = {m.rows(), m.cols()};
  t.payload.resize(m.size() * sizeof(T));
  if (!m.empty()) std::memcpy(t.payload.data(), m.values().data(), t.payload.size());
  write_raw_tensor(path, t);
}

template <typename T>
BasicMatrix<T> load_tensor(const std::filesystem::path& path) {
  const RawTensor t = read_raw_tensor(path);
  if (t.dtype != dtype_of<T>()) fail(Errc::bad_dtype, "dtype mismatch in " + path.string());
  std::size_t rows = 1;
  std::size_t cols = 1;
  if (t.shape.size() == 2) {
    rows = t.shape[0];
    cols = t.shape[1];
  } else if (t.shape.size() == 1) {
    cols = t.shape[0];
  } else {
    fail(Errc::shape_mismatch, "expected a 1-D or 2-D tensor in " + path.string());
  }
  std::vector<T> data(rows * cols);
  if (!data.empty()) std::memcpy(data.data(), t.payload.data(), t.payload.size());
  return BasicMatrix<T>(rows, cols, std::move(data));
}

template void save_tensor<float>(const std::filesystem::path&, const BasicMatrix<float>&);
template void save_tensor<double>(const std::filesystem::path&, const BasicMatrix<double>&);
template void save_tensor<std::uint8_t>(const std::filesystem::path&, const BasicMatrix<std::uint8_t>&);
template BasicMatrix<float> load_tensor<float>(const std::filesystem::path&);
template BasicMatrix<double> load_tensor<double>(const std::filesystem::path&);
template BasicMatrix<std::uint8_t> load_tensor<std::uint8_t>(const std::filesystem::path&);

}  // namespace gtn
