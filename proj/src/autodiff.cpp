#include "graft/autodiff.hpp"

#include <algorithm>
#include <limits>

#include "graft/error.hpp"
#include "graft/kernels.hpp"

namespace graft {

bool is_differentiable(OpKind op) {
  switch (op) {
    case OpKind::Placeholder:
    case OpKind::Const:
    case OpKind::Conv2D:
    case OpKind::Dense:
    case OpKind::ReLU:
    case OpKind::Sigmoid:
    case OpKind::MaxPool2D:
    case OpKind::GlobalMaxPool:
    case OpKind::Concat:
    case OpKind::Reshape:
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
      return true;
    default:
      return false;
  }
}

Tape record(const Graph& graph, const TensorMap& feeds) {
  for (const auto& n : graph.nodes) {
    if (!is_differentiable(n.op)) {
      throw Error(Errc::NonDifferentiableOp,
                  "'" + n.name + "' is a " + std::string(op_name(n.op)) + "; the operators must be differentiable to train");
    }
  }
  Tape tape;
  tape.graph = &graph;
  tape.order = canonical_order(graph);
  tape.owned.resize(graph.nodes.size());
  tape.value.assign(graph.nodes.size(), nullptr);
  std::vector<const Tensor*> in;
  for (auto i : tape.order) {
    const Node& n = graph.nodes[i];
    if (n.op == OpKind::Placeholder) {
      tape.owned[i] = feed_for(n, feeds);
      tape.value[i] = &tape.owned[i];
    } else if (n.op == OpKind::Const) {
      tape.value[i] = &*n.value;
    } else {
      in.clear();
      for (const auto& e : n.inputs) in.push_back(tape.value[e.node]);
      tape.owned[i] = eval_node(n, in);
      tape.value[i] = &tape.owned[i];
    }
  }
  return tape;
}

namespace {

void accumulate(Tensor& into, const Tensor& g) {
  if (into.values.empty()) {
    into = g;
    return;
  }
  for (std::size_t i = 0; i < g.values.size(); ++i) into.values[i] += g.values[i];
}

// Sum a full-size gradient down to an operand that was broadcast into it.
Tensor reduce_to(const Tensor& g, const Shape& shape) {
  const auto n = num_elements(shape);
  if (n == g.size()) {
    Tensor out = g;
    out.shape = shape;
    return out;
  }
  Tensor out = Tensor::zeros(shape);
  for (std::size_t i = 0; i < g.values.size(); ++i) out.values[i % n] += g.values[i];
  return out;
}

void conv2d_backward(const Node& n, const Tensor& x, const Tensor& w, const Tensor& g, Tensor& dx, Tensor& dw,
                     Tensor& db) {
  const auto H = x.shape[0], W = x.shape[1], C = x.shape[2];
  const auto kh = w.shape[0], kw = w.shape[1], cout = w.shape[3];
  const auto stride = n.attr_u32_or("stride", 1);
  const auto pad = static_cast<Padding>(n.attr_u32_or("padding", 0));
  const auto wy = kernels::window(H, kh, stride, pad);
  const auto wx = kernels::window(W, kw, stride, pad);
  dx = Tensor::zeros(x.shape);
  dw = Tensor::zeros(w.shape);
  db = Tensor::zeros({cout});
  for (std::uint32_t oy = 0; oy < wy.out; ++oy) {
    for (std::uint32_t ox = 0; ox < wx.out; ++ox) {
      const float* gp = &g.values[(static_cast<std::size_t>(oy) * wx.out + ox) * cout];
      for (std::uint32_t co = 0; co < cout; ++co) db.values[co] += gp[co];
      for (std::uint32_t ky = 0; ky < kh; ++ky) {
        const std::int64_t iy = static_cast<std::int64_t>(oy) * stride + ky - wy.pad_before;
        if (iy < 0 || iy >= H) continue;
        for (std::uint32_t kx = 0; kx < kw; ++kx) {
          const std::int64_t ix = static_cast<std::int64_t>(ox) * stride + kx - wx.pad_before;
          if (ix < 0 || ix >= W) continue;
          const std::size_t xoff = (iy * W + ix) * C;
          const std::size_t woff = (static_cast<std::size_t>(ky) * kw + kx) * C * cout;
          for (std::uint32_t ci = 0; ci < C; ++ci) {
            const float xv = x.values[xoff + ci];
            const float* wr = &w.values[woff + static_cast<std::size_t>(ci) * cout];
            float* dwr = &dw.values[woff + static_cast<std::size_t>(ci) * cout];
            float acc = 0.0f;
            for (std::uint32_t co = 0; co < cout; ++co) {
              dwr[co] += xv * gp[co];
              acc += wr[co] * gp[co];
            }
            dx.values[xoff + ci] += acc;
          }
        }
      }
    }
  }
}

void max_pool_backward(const Node& n, const Tensor& x, const Tensor& g, Tensor& dx) {
  const auto H = x.shape[0], W = x.shape[1], C = x.shape[2];
  const auto k = n.attr_u32_or("kernel", 2);
  const auto stride = n.attr_u32_or("stride", k);
  const auto pad = static_cast<Padding>(n.attr_u32_or("padding", 0));
  const auto wy = kernels::window(H, k, stride, pad);
  const auto wx = kernels::window(W, k, stride, pad);
  dx = Tensor::zeros(x.shape);
  for (std::uint32_t oy = 0; oy < wy.out; ++oy) {
    for (std::uint32_t ox = 0; ox < wx.out; ++ox) {
      for (std::uint32_t c = 0; c < C; ++c) {
        float best = -std::numeric_limits<float>::infinity();
        std::size_t arg = std::numeric_limits<std::size_t>::max();
        for (std::uint32_t ky = 0; ky < k; ++ky) {
          const std::int64_t iy = static_cast<std::int64_t>(oy) * stride + ky - wy.pad_before;
          if (iy < 0 || iy >= H) continue;
          for (std::uint32_t kx = 0; kx < k; ++kx) {
            const std::int64_t ix = static_cast<std::int64_t>(ox) * stride + kx - wx.pad_before;
            if (ix < 0 || ix >= W) continue;
            const std::size_t idx = (iy * W + ix) * C + c;
            if (arg == std::numeric_limits<std::size_t>::max() || x.values[idx] > best) {
              best = x.values[idx];
              arg = idx;
            }
          }
        }
        if (arg != std::numeric_limits<std::size_t>::max()) {
          dx.values[arg] += g.values[(static_cast<std::size_t>(oy) * wx.out + ox) * C + c];
        }
      }
    }
  }
}

}  // namespace

std::vector<Tensor> backward(const Tape& tape, const TensorMap& seeds) {
  const Graph& graph = *tape.graph;
  std::vector<Tensor> grad(graph.nodes.size());
  for (const auto& [name, g] : seeds) {
    auto i = graph.find(name);
    if (!i) throw Error(Errc::ValidationFailed, "seed for unknown node '" + name + "'");
    if (g.shape != tape.value[*i]->shape) {
      throw Error(Errc::ShapeMismatch, "seed for '" + name + "' is " + shape_str(g.shape) + ", node is " +
                                           shape_str(tape.value[*i]->shape));
    }
    accumulate(grad[*i], g);
  }

  for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
    const auto i = *it;
    const Node& n = graph.nodes[i];
    if (grad[i].values.empty() || n.inputs.empty()) continue;
    const Tensor& g = grad[i];
    auto in = [&](std::size_t k) -> const Tensor& { return *tape.value[n.inputs[k].node]; };
    auto push = [&](std::size_t k, const Tensor& d) { accumulate(grad[n.inputs[k].node], d); };

    switch (n.op) {
      case OpKind::Conv2D: {
        Tensor dx, dw, db;
        conv2d_backward(n, in(0), in(1), g, dx, dw, db);
        push(0, dx);
        push(1, dw);
        push(2, db);
        break;
      }
      case OpKind::Dense: {
        const Tensor& x = in(0);
        const Tensor& w = in(1);
        const auto inn = w.shape[0], outn = w.shape[1];
        Tensor dx = Tensor::zeros(x.shape);
        Tensor dw = Tensor::zeros(w.shape);
        for (std::uint32_t r = 0; r < inn; ++r) {
          float acc = 0.0f;
          for (std::uint32_t o = 0; o < outn; ++o) {
            acc += w.values[static_cast<std::size_t>(r) * outn + o] * g.values[o];
            dw.values[static_cast<std::size_t>(r) * outn + o] = x.values[r] * g.values[o];
          }
          dx.values[r] = acc;
        }
        push(0, dx);
        push(1, dw);
        push(2, reduce_to(g, in(2).shape));
        break;
      }
      case OpKind::ReLU: {
        const Tensor& x = in(0);
        Tensor d = g;
        for (std::size_t k = 0; k < d.values.size(); ++k) {
          if (!(x.values[k] > 0.0f)) d.values[k] = 0.0f;
        }
        push(0, d);
        break;
      }
      case OpKind::Sigmoid: {
        const Tensor& y = *tape.value[i];
        Tensor d = g;
        for (std::size_t k = 0; k < d.values.size(); ++k) d.values[k] *= y.values[k] * (1.0f - y.values[k]);
        push(0, d);
        break;
      }
      case OpKind::MaxPool2D: {
        Tensor dx;
        max_pool_backward(n, in(0), g, dx);
        push(0, dx);
        break;
      }
      case OpKind::GlobalMaxPool: {
        const Tensor& x = in(0);
        const auto C = x.shape[2];
        const std::size_t pixels = static_cast<std::size_t>(x.shape[0]) * x.shape[1];
        Tensor dx = Tensor::zeros(x.shape);
        for (std::uint32_t c = 0; c < C; ++c) {
          std::size_t arg = c;
          for (std::size_t p = 1; p < pixels; ++p) {
            if (x.values[p * C + c] > x.values[arg]) arg = p * C + c;
          }
          dx.values[arg] += g.values[c];
        }
        push(0, dx);
        break;
      }
      case OpKind::Concat: {
        const auto axis = n.attr_u32_or("axis", static_cast<std::uint32_t>(g.rank() - 1));
        std::size_t outer = 1, inner = 1;
        for (std::size_t d = 0; d < axis; ++d) outer *= g.shape[d];
        for (std::size_t d = axis + 1; d < g.rank(); ++d) inner *= g.shape[d];
        std::vector<Tensor> parts;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) parts.push_back(Tensor::zeros(in(k).shape));
        std::size_t pos = 0;
        for (std::size_t o = 0; o < outer; ++o) {
          for (auto& p : parts) {
            const std::size_t block = p.shape[axis] * inner;
            std::copy_n(g.values.begin() + static_cast<std::ptrdiff_t>(pos), block,
                        p.values.begin() + static_cast<std::ptrdiff_t>(o * block));
            pos += block;
          }
        }
        for (std::size_t k = 0; k < parts.size(); ++k) push(k, parts[k]);
        break;
      }
      case OpKind::Reshape: {
        Tensor d = g;
        d.shape = in(0).shape;
        push(0, d);
        break;
      }
      case OpKind::Add:
      case OpKind::Sub: {
        push(0, reduce_to(g, in(0).shape));
        Tensor d = g;
        if (n.op == OpKind::Sub) {
          for (auto& v : d.values) v = -v;
        }
        push(1, reduce_to(d, in(1).shape));
        break;
      }
      case OpKind::Mul: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        Tensor da = g, db = g;
        for (std::size_t k = 0; k < g.values.size(); ++k) {
          da.values[k] = g.values[k] * b.values[k % b.size()];
          db.values[k] = g.values[k] * a.values[k % a.size()];
        }
        push(0, reduce_to(da, a.shape));
        push(1, reduce_to(db, b.shape));
        break;
      }
      default:
        throw Error(Errc::NonDifferentiableOp, "'" + n.name + "' is a " + std::string(op_name(n.op)));
    }
  }

  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (graph.nodes[i].op != OpKind::Const) {
      grad[i] = Tensor();
    } else if (grad[i].values.empty()) {
      grad[i] = Tensor::zeros(graph.nodes[i].value->shape);
    }
  }
  return grad;
}

TensorMap backward(const Graph& graph, const TensorMap& feeds, const TensorMap& seeds) {
  const Tape tape = record(graph, feeds);
  auto grads = backward(tape, seeds);
  TensorMap out;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (graph.nodes[i].op == OpKind::Const) out.emplace(graph.nodes[i].name, std::move(grads[i]));
  }
  return out;
}

}  // namespace graft
