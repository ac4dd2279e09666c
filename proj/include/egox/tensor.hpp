#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace egox {

enum class DType : std::uint8_t { F32 = 0, U8 = 1 };

std::size_t dtype_size(DType dtype);

using Shape = std::vector<std::uint32_t>;

/// Dense row-major tensor holding either float32 or uint8 values.
///
/// This is the in-memory form of the EGXT file format. Videos use the
/// canonical F x 3 x H x W float layout with values in [0, 1]; masks use
/// F x H x W uint8 in {0, 1}.
class Tensor {
 public:
  Tensor() = default;
  Tensor(DType dtype, Shape dims);

  static Tensor f32(Shape dims, std::vector<float> values);
  static Tensor u8(Shape dims, std::vector<std::uint8_t> values);

  DType dtype() const { return dtype_; }
  const Shape& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::uint32_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t numel() const { return numel_; }

  std::span<float> f32();
  std::span<const float> f32() const;
  std::span<std::uint8_t> u8();
  std::span<const std::uint8_t> u8() const;

  /// Raw payload bytes in host order.
  std::span<const std::byte> bytes() const;

  /// Bitwise equality of dtype, shape and payload.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  DType dtype_ = DType::F32;
  Shape dims_;
  std::size_t numel_ = 0;
  std::vector<float> f32_;
  std::vector<std::uint8_t> u8_;
};

/// Product of dims; throws on an empty shape, a zero dim, or size_t overflow.
std::size_t checked_numel(const Shape& dims);

// EGXT container: "EGXT" | u32 version=1 | u8 dtype | u8 ndim | ndim x u32 | payload.
// All multi-byte fields little-endian.
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::size_t kMaxTensorRank = 5;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace egox
