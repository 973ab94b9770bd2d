#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "graft/graph.hpp"
#include "graft/tensor.hpp"

// Reference kernels for every executable op. Layouts are row-major with
// channels last: images H x W x C, conv weights kH x kW x Cin x Cout, dense
// weights In x Out.
namespace graft::kernels {

// --- shape rules (shared with infer_shapes) --------------------------------

struct Window {
  std::uint32_t out = 0;
  std::uint32_t pad_before = 0;
};

/// Output extent and leading pad for a sliding window. Same padding adds the
/// odd pixel on the bottom/right.
Window window(std::uint32_t in, std::uint32_t kernel, std::uint32_t stride, Padding padding);

/// Shape of an elementwise binary op: equal shapes, a single-element operand,
/// or an operand whose shape (leading 1s dropped) is a trailing suffix of the
/// other's.
std::optional<Shape> binary_shape(const Shape& a, const Shape& b);

/// Whether `from` can be broadcast to `to` under the same trailing-suffix rule.
bool broadcastable(const Shape& from, const Shape& to);

// --- kernels ----------------------------------------------------------------

/// Direct convolution. Each output accumulates kH -> kW -> Cin starting from
/// zero, and the bias is added last.
Tensor conv2d(const Tensor& data, const Tensor& weights, const Tensor& bias, std::uint32_t stride,
              Padding padding);

/// y[o] = (sum_i x[i] * w[i][o], in ascending i) + b[o]; input is flattened.
Tensor dense(const Tensor& data, const Tensor& weights, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Softmax over the last axis.
Tensor softmax(const Tensor& x);
/// sign(0) == 0.
Tensor sign(const Tensor& x);

enum class BinaryOp { Add, Sub, Mul };
Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor concat(std::span<const Tensor* const> parts, std::uint32_t axis);

Tensor max_pool2d(const Tensor& data, std::uint32_t kernel, std::uint32_t stride, Padding padding);
Tensor global_max_pool(const Tensor& data);

/// Half-pixel-centre resize of an H x W x C image.
Tensor resize(const Tensor& data, std::uint32_t out_h, std::uint32_t out_w,
              ResizeMode mode = ResizeMode::Bilinear);

}  // namespace graft::kernels
