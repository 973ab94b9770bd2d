#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace graft {

enum class DType : std::uint8_t { F32 = 0, I8 = 1, I16 = 2, I32 = 3 };

std::string_view dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

using Shape = std::vector<std::uint32_t>;

inline constexpr std::size_t kMaxRank = 4;

std::size_t num_elements(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor. F32 payloads live in `values`; the integer dtypes
/// exist only so decoded quantized models can be recognized and rejected, and
/// keep their scalars (widened) in `ints`.
struct Tensor {
  DType dtype = DType::F32;
  Shape shape;
  std::vector<float> values;
  std::vector<std::int32_t> ints;

  Tensor() = default;
  Tensor(Shape s, std::vector<float> v) : shape(std::move(s)), values(std::move(v)) {}

  static Tensor zeros(Shape s);
  static Tensor filled(Shape s, float v);
  static Tensor scalar(float v) { return Tensor({1}, {v}); }
  static Tensor integer(DType dtype, Shape s, std::vector<std::int32_t> v);

  [[nodiscard]] std::size_t size() const { return num_elements(shape); }
  [[nodiscard]] std::size_t rank() const { return shape.size(); }
  [[nodiscard]] bool is_f32() const { return dtype == DType::F32; }

  [[nodiscard]] std::span<float> data() { return values; }
  [[nodiscard]] std::span<const float> data() const { return values; }

  float& operator[](std::size_t i) { return values[i]; }
  float operator[](std::size_t i) const { return values[i]; }

  /// Rank-3 accessor (H x W x C).
  float& at(std::size_t h, std::size_t w, std::size_t c) {
    return values[(h * shape[1] + w) * shape[2] + c];
  }
  float at(std::size_t h, std::size_t w, std::size_t c) const {
    return values[(h * shape[1] + w) * shape[2] + c];
  }

  /// Empty string when the tensor is well formed.
  [[nodiscard]] std::string check() const;
};

/// Bitwise equality, so -0.0 != 0.0 and identical NaN payloads compare equal.
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace graft
