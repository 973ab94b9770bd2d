#include "graft/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "graft/error.hpp"

namespace graft::kernels {

namespace {

[[noreturn]] void mismatch(const std::string& what) { throw Error(Errc::ShapeMismatch, what); }

void need_f32(const Tensor& t, const char* who) {
  if (!t.is_f32()) {
    throw Error(Errc::NonF32Execution, std::string(who) + " got a " +
                                           std::string(dtype_name(t.dtype)) + " tensor");
  }
}

void need_rank3(const Tensor& t, const char* who) {
  need_f32(t, who);
  if (t.rank() != 3) mismatch(std::string(who) + " expects H x W x C, got " + shape_str(t.shape));
}

Shape strip_leading_ones(const Shape& s) {
  std::size_t i = 0;
  while (i + 1 < s.size() && s[i] == 1) ++i;
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
  auto s = strip_leading_ones(small);
  if (s.size() > big.size()) return false;
  return std::equal(s.rbegin(), s.rend(), big.rbegin());
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  need_f32(x, "elementwise op");
  Tensor y = x;
  for (auto& v : y.values) v = f(v);
  return y;
}

}  // namespace

Window window(std::uint32_t in, std::uint32_t kernel, std::uint32_t stride, Padding padding) {
  if (stride == 0 || kernel == 0) mismatch("kernel and stride must be positive");
  if (padding == Padding::Same) {
    const std::uint32_t out = (in + stride - 1) / stride;
    const std::int64_t needed =
        static_cast<std::int64_t>(out - 1) * stride + kernel - static_cast<std::int64_t>(in);
    const auto total = static_cast<std::uint32_t>(std::max<std::int64_t>(needed, 0));
    return {out, total / 2};
  }
  if (in < kernel) mismatch("valid window larger than input");
  return {(in - kernel) / stride + 1, 0};
}

std::optional<Shape> binary_shape(const Shape& a, const Shape& b) {
  if (a == b) return a;
  const auto na = num_elements(a);
  const auto nb = num_elements(b);
  // Equal element counts resolve to the higher rank, as with leading 1s.
  const bool a_wins = na > nb || (na == nb && a.size() >= b.size());
  if (nb == 1 && a_wins) return a;
  if (na == 1 && !a_wins) return b;
  if (a_wins && is_suffix(b, a)) return a;
  if (!a_wins && is_suffix(a, b)) return b;
  return std::nullopt;
}

bool broadcastable(const Shape& from, const Shape& to) {
  return num_elements(from) == 1 || is_suffix(from, to);
}

Tensor conv2d(const Tensor& data, const Tensor& weights, const Tensor& bias, std::uint32_t stride,
              Padding padding) {
  need_rank3(data, "Conv2D");
  need_f32(weights, "Conv2D");
  need_f32(bias, "Conv2D");
  if (weights.rank() != 4) mismatch("Conv2D weights must be kH x kW x Cin x Cout");
  const auto H = data.shape[0], W = data.shape[1], C = data.shape[2];
  const auto kh = weights.shape[0], kw = weights.shape[1], cin = weights.shape[2],
             cout = weights.shape[3];
  if (cin != C) mismatch("Conv2D input has " + std::to_string(C) + " channels, weights expect " +
                         std::to_string(cin));
  if (bias.size() != cout) mismatch("Conv2D bias length must equal Cout");
  const auto wy = window(H, kh, stride, padding);
  const auto wx = window(W, kw, stride, padding);

  Tensor out = Tensor::zeros({wy.out, wx.out, cout});
  std::vector<float> acc(cout);
  const float* x = data.values.data();
  const float* w = weights.values.data();
  for (std::uint32_t oy = 0; oy < wy.out; ++oy) {
    for (std::uint32_t ox = 0; ox < wx.out; ++ox) {
      std::fill(acc.begin(), acc.end(), 0.0f);
      for (std::uint32_t ky = 0; ky < kh; ++ky) {
        const std::int64_t iy = static_cast<std::int64_t>(oy) * stride + ky - wy.pad_before;
        if (iy < 0 || iy >= H) continue;
        for (std::uint32_t kx = 0; kx < kw; ++kx) {
          const std::int64_t ix = static_cast<std::int64_t>(ox) * stride + kx - wx.pad_before;
          if (ix < 0 || ix >= W) continue;
          const float* xp = x + (iy * W + ix) * C;
          const float* wp = w + (static_cast<std::size_t>(ky) * kw + kx) * cin * cout;
          for (std::uint32_t ci = 0; ci < C; ++ci) {
            const float xv = xp[ci];
            const float* wr = wp + static_cast<std::size_t>(ci) * cout;
            for (std::uint32_t co = 0; co < cout; ++co) acc[co] += xv * wr[co];
          }
        }
      }
      float* op = &out.at(oy, ox, 0);
      for (std::uint32_t co = 0; co < cout; ++co) op[co] = acc[co] + bias.values[co];
    }
  }
  return out;
}

Tensor dense(const Tensor& data, const Tensor& weights, const Tensor& bias) {
  need_f32(data, "Dense");
  need_f32(weights, "Dense");
  need_f32(bias, "Dense");
  if (weights.rank() != 2) mismatch("Dense weights must be In x Out");
  const auto in = weights.shape[0], outn = weights.shape[1];
  if (data.size() != in) mismatch("Dense input has " + std::to_string(data.size()) +
                                  " elements, weights expect " + std::to_string(in));
  if (bias.size() != outn) mismatch("Dense bias length must equal Out");
  std::vector<float> acc(outn, 0.0f);
  for (std::uint32_t i = 0; i < in; ++i) {
    const float xv = data.values[i];
    const float* wr = weights.values.data() + static_cast<std::size_t>(i) * outn;
    for (std::uint32_t o = 0; o < outn; ++o) acc[o] += xv * wr[o];
  }
  for (std::uint32_t o = 0; o < outn; ++o) acc[o] = acc[o] + bias.values[o];
  return Tensor({outn}, std::move(acc));
}

Tensor relu(const Tensor& x) {
  return map(x, [](float v) { return v > 0.0f ? v : 0.0f; });
}

Tensor sigmoid(const Tensor& x) {
  return map(x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); });
}

Tensor sign(const Tensor& x) {
  return map(x, [](float v) {
    if (v > 0.0f) return 1.0f;
    if (v < 0.0f) return -1.0f;
    return v == 0.0f ? 0.0f : v;  // NaN propagates
  });
}

Tensor softmax(const Tensor& x) {
  need_f32(x, "Softmax");
  Tensor y = x;
  if (x.rank() == 0 || x.size() == 0) return y;
  const std::size_t last = x.shape.back();
  for (std::size_t base = 0; base < y.values.size(); base += last) {
    float m = y.values[base];
    for (std::size_t i = 1; i < last; ++i) m = std::max(m, y.values[base + i]);
    float s = 0.0f;
    for (std::size_t i = 0; i < last; ++i) {
      y.values[base + i] = std::exp(y.values[base + i] - m);
      s += y.values[base + i];
    }
    for (std::size_t i = 0; i < last; ++i) y.values[base + i] /= s;
  }
  return y;
}

Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b) {
  need_f32(a, "binary op");
  need_f32(b, "binary op");
  auto shape = binary_shape(a.shape, b.shape);
  if (!shape) mismatch("cannot combine " + shape_str(a.shape) + " with " + shape_str(b.shape));
  Tensor out = Tensor::zeros(*shape);
  const auto na = a.size(), nb = b.size();
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const float x = a.values[i % na];
    const float y = b.values[i % nb];
    switch (op) {
      case BinaryOp::Add: out.values[i] = x + y; break;
      case BinaryOp::Sub: out.values[i] = x - y; break;
      case BinaryOp::Mul: out.values[i] = x * y; break;
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Mul, a, b); }

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape.size() > kMaxRank) throw Error(Errc::UnknownRank, "reshape target rank exceeds 4");
  if (num_elements(shape) != x.size()) {
    mismatch("cannot reshape " + shape_str(x.shape) + " to " + shape_str(shape));
  }
  Tensor y = x;
  y.shape = shape;
  return y;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  need_f32(x, "Broadcast");
  if (!broadcastable(x.shape, shape)) {
    mismatch("cannot broadcast " + shape_str(x.shape) + " to " + shape_str(shape));
  }
  Tensor y = Tensor::zeros(shape);
  const auto n = x.size();
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] = x.values[i % n];
  return y;
}

Tensor concat(std::span<const Tensor* const> parts, std::uint32_t axis) {
  if (parts.empty()) mismatch("Concat needs at least one input");
  const Shape& first = parts[0]->shape;
  if (axis >= first.size()) mismatch("Concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor* p : parts) {
    need_f32(*p, "Concat");
    if (p->rank() != first.size()) mismatch("Concat inputs differ in rank");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p->shape[d] != first[d]) mismatch("Concat inputs differ off-axis");
    }
    out_shape[axis] += p->shape[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  Tensor out = Tensor::zeros(out_shape);
  std::size_t k = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (const Tensor* p : parts) {
      const std::size_t block = p->shape[axis] * inner;
      std::copy_n(p->values.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  out.values.begin() + static_cast<std::ptrdiff_t>(k));
      k += block;
    }
  }
  return out;
}

Tensor max_pool2d(const Tensor& data, std::uint32_t kernel, std::uint32_t stride, Padding padding) {
  need_rank3(data, "MaxPool2D");
  const auto H = data.shape[0], W = data.shape[1], C = data.shape[2];
  const auto wy = window(H, kernel, stride, padding);
  const auto wx = window(W, kernel, stride, padding);
  Tensor out = Tensor::zeros({wy.out, wx.out, C});
  for (std::uint32_t oy = 0; oy < wy.out; ++oy) {
    for (std::uint32_t ox = 0; ox < wx.out; ++ox) {
      for (std::uint32_t c = 0; c < C; ++c) {
        float m = -std::numeric_limits<float>::infinity();
        for (std::uint32_t ky = 0; ky < kernel; ++ky) {
          const std::int64_t iy = static_cast<std::int64_t>(oy) * stride + ky - wy.pad_before;
          if (iy < 0 || iy >= H) continue;
          for (std::uint32_t kx = 0; kx < kernel; ++kx) {
            const std::int64_t ix = static_cast<std::int64_t>(ox) * stride + kx - wx.pad_before;
            if (ix < 0 || ix >= W) continue;
            m = std::max(m, data.values[(iy * W + ix) * C + c]);
          }
        }
        out.at(oy, ox, c) = m;
      }
    }
  }
  return out;
}

Tensor global_max_pool(const Tensor& data) {
  need_rank3(data, "GlobalMaxPool");
  const auto C = data.shape[2];
  const std::size_t pixels = static_cast<std::size_t>(data.shape[0]) * data.shape[1];
  if (pixels == 0) mismatch("GlobalMaxPool over an empty map");
  Tensor out = Tensor::zeros({1, 1, C});
  for (std::uint32_t c = 0; c < C; ++c) {
    float m = data.values[c];
    for (std::size_t p = 1; p < pixels; ++p) m = std::max(m, data.values[p * C + c]);
    out.values[c] = m;
  }
  return out;
}

Tensor resize(const Tensor& data, std::uint32_t out_h, std::uint32_t out_w, ResizeMode mode) {
  need_rank3(data, "Resize");
  if (out_h == 0 || out_w == 0) mismatch("Resize target must be at least 1x1");
  const auto H = data.shape[0], W = data.shape[1], C = data.shape[2];
  if (H == 0 || W == 0) mismatch("Resize of an empty image");
  Tensor out = Tensor::zeros({out_h, out_w, C});
  const float sy = static_cast<float>(H) / static_cast<float>(out_h);
  const float sx = static_cast<float>(W) / static_cast<float>(out_w);

  if (mode == ResizeMode::Nearest) {
    for (std::uint32_t y = 0; y < out_h; ++y) {
      const auto iy = std::min<std::uint32_t>(
          static_cast<std::uint32_t>(std::floor((static_cast<float>(y) + 0.5f) * sy)), H - 1);
      for (std::uint32_t x = 0; x < out_w; ++x) {
        const auto ix = std::min<std::uint32_t>(
            static_cast<std::uint32_t>(std::floor((static_cast<float>(x) + 0.5f) * sx)), W - 1);
        for (std::uint32_t c = 0; c < C; ++c) out.at(y, x, c) = data.at(iy, ix, c);
      }
    }
    return out;
  }

  for (std::uint32_t y = 0; y < out_h; ++y) {
    const float fy = std::max((static_cast<float>(y) + 0.5f) * sy - 0.5f, 0.0f);
    const auto y0 = std::min<std::uint32_t>(static_cast<std::uint32_t>(fy), H - 1);
    const auto y1 = std::min<std::uint32_t>(y0 + 1, H - 1);
    const float ty = fy - static_cast<float>(y0);
    for (std::uint32_t x = 0; x < out_w; ++x) {
      const float fx = std::max((static_cast<float>(x) + 0.5f) * sx - 0.5f, 0.0f);
      const auto x0 = std::min<std::uint32_t>(static_cast<std::uint32_t>(fx), W - 1);
      const auto x1 = std::min<std::uint32_t>(x0 + 1, W - 1);
      const float tx = fx - static_cast<float>(x0);
      for (std::uint32_t c = 0; c < C; ++c) {
        const float a = data.at(y0, x0, c), b = data.at(y0, x1, c);
        const float d = data.at(y1, x0, c), e = data.at(y1, x1, c);
        const float top = a + tx * (b - a);
        const float bottom = d + tx * (e - d);
        out.at(y, x, c) = top + ty * (bottom - top);
      }
    }
  }
  return out;
}

}  // namespace graft::kernels
