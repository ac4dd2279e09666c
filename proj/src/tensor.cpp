#include "egox/tensor.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "egox/error.hpp"

namespace egox {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'E', 'G', 'X', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::U8: return 1;
  }
  throw Error("unknown dtype");
}

std::size_t checked_numel(const Shape& dims) {
  if (dims.empty()) throw Error("unsupported rank 0");
  std::size_t n = 1;
  for (auto d : dims) {
    if (d == 0) throw Error("tensor dims must be >= 1");
    if (n > std::numeric_limits<std::size_t>::max() / 4 / d) throw Error("tensor dims overflow");
    n *= d;
  }
  return n;
}

Tensor::Tensor(DType dtype, Shape dims) : dtype_(dtype), dims_(std::move(dims)) {
  numel_ = checked_numel(dims_);
  if (dtype_ == DType::F32)
    f32_.assign(numel_, 0.0f);
  else
    u8_.assign(numel_, 0);
}

Tensor Tensor::f32(Shape dims, std::vector<float> values) {
  Tensor t;
  t.dtype_ = DType::F32;
  t.numel_ = checked_numel(dims);
  if (values.size() != t.numel_) throw Error("tensor payload does not match dims");
  t.dims_ = std::move(dims);
  t.f32_ = std::move(values);
  return t;
}

Tensor Tensor::u8(Shape dims, std::vector<std::uint8_t> values) {
  Tensor t;
  t.dtype_ = DType::U8;
  t.numel_ = checked_numel(dims);
  if (values.size() != t.numel_) throw Error("tensor payload does not match dims");
  t.dims_ = std::move(dims);
  t.u8_ = std::move(values);
  return t;
}

std::span<float> Tensor::f32() {
  if (dtype_ != DType::F32) throw Error("tensor dtype is not f32");
  return f32_;
}
std::span<const float> Tensor::f32() const {
  if (dtype_ != DType::F32) throw Error("tensor dtype is not f32");
  return f32_;
}
std::span<std::uint8_t> Tensor::u8() {
  if (dtype_ != DType::U8) throw Error("tensor dtype is not u8");
  return u8_;
}
std::span<const std::uint8_t> Tensor::u8() const {
  if (dtype_ != DType::U8) throw Error("tensor dtype is not u8");
  return u8_;
}

std::span<const std::byte> Tensor::bytes() const {
  if (dtype_ == DType::F32) return std::as_bytes(std::span<const float>(f32_));
  return std::as_bytes(std::span<const std::uint8_t>(u8_));
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.dtype_ != b.dtype_ || a.dims_ != b.dims_) return false;
  auto x = a.bytes();
  auto y = b.bytes();
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size()) == 0;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() < 1 || t.rank() > kMaxTensorRank)
    throw Error("unsupported rank " + std::to_string(t.rank()));
  std::vector<std::uint8_t> out;
  out.reserve(10 + 4 * t.rank() + t.numel() * dtype_size(t.dtype()));
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, kTensorVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype()));
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.dims()) put_u32(out, d);
  if (t.dtype() == DType::U8) {
    auto v = t.u8();
    out.insert(out.end(), v.begin(), v.end());
  } else {
    for (float f : t.f32()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> in) {
  if (in.size() < 10) throw Error("truncated tensor header");
  if (!std::equal(kMagic.begin(), kMagic.end(), in.begin())) throw Error("bad tensor magic");
  if (get_u32(in, 4) != kTensorVersion) throw Error("unsupported tensor version");
  const std::uint8_t dtype_tag = in[8];
  if (dtype_tag > 1) throw Error("unsupported tensor dtype " + std::to_string(dtype_tag));
  const auto dtype = static_cast<DType>(dtype_tag);
  const std::size_t ndim = in[9];
  if (ndim < 1 || ndim > kMaxTensorRank) throw Error("unsupported rank " + std::to_string(ndim));
  const std::size_t header = 10 + 4 * ndim;
  if (in.size() < header) throw Error("truncated tensor header");
  Shape dims(ndim);
  for (std::size_t i = 0; i < ndim; ++i) dims[i] = get_u32(in, 10 + 4 * i);
  const std::size_t n = checked_numel(dims);
  const std::size_t payload = n * dtype_size(dtype);
  if (in.size() - header < payload) throw Error("truncated tensor payload");
  if (in.size() - header > payload) throw Error("tensor payload longer than dims");
  auto body = in.subspan(header);
  if (dtype == DType::U8) return Tensor::u8(std::move(dims), {body.begin(), body.end()});
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<float>(get_u32(body, 4 * i));
  return Tensor::f32(std::move(dims), std::move(values));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace egox
