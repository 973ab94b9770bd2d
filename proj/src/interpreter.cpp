#include "graft/interpreter.hpp"

#include "graft/error.hpp"
#include "graft/kernels.hpp"

namespace graft {

namespace {

Tensor eval_op(const Node& n, const std::vector<const Tensor*>& in) {
  using namespace kernels;
  switch (n.op) {
    case OpKind::Conv2D:
      return conv2d(*in[0], *in[1], *in[2], n.attr_u32_or("stride", 1),
                    static_cast<Padding>(n.attr_u32_or("padding", 0)));
    case OpKind::Dense: return dense(*in[0], *in[1], *in[2]);
    case OpKind::ReLU: return relu(*in[0]);
    case OpKind::Sigmoid: return sigmoid(*in[0]);
    case OpKind::Softmax: return softmax(*in[0]);
    case OpKind::Sign: return sign(*in[0]);
    case OpKind::Add: return add(*in[0], *in[1]);
    case OpKind::Sub: return sub(*in[0], *in[1]);
    case OpKind::Mul: return mul(*in[0], *in[1]);
    case OpKind::Reshape: return reshape(*in[0], *n.attr_shape("shape"));
    case OpKind::Broadcast: return broadcast_to(*in[0], in[1]->shape);
    case OpKind::Concat: {
      const auto axis =
          n.attr_u32_or("axis", in[0]->shape.empty() ? 0 : static_cast<std::uint32_t>(in[0]->rank() - 1));
      return concat(in, axis);
    }
    case OpKind::MaxPool2D: {
      const auto k = n.attr_u32_or("kernel", 2);
      return max_pool2d(*in[0], k, n.attr_u32_or("stride", k),
                        static_cast<Padding>(n.attr_u32_or("padding", 0)));
    }
    case OpKind::GlobalMaxPool: return global_max_pool(*in[0]);
    case OpKind::Resize: {
      const auto s = *n.attr_shape("shape");
      if (s.size() != 2) throw Error(Errc::ShapeMismatch, "'" + n.name + "': Resize target must be (H, W)");
      return resize(*in[0], s[0], s[1], static_cast<ResizeMode>(n.attr_u32_or("mode", 0)));
    }
    case OpKind::Placeholder:
    case OpKind::Const:
      break;
  }
  throw Error(Errc::ValidationFailed, "'" + n.name + "' is not a compute op");
}

}  // namespace

Tensor eval_node(const Node& n, const std::vector<const Tensor*>& in) {
  try {
    return eval_op(n, in);
  } catch (const Error& e) {
    throw Error(e.code(), "'" + n.name + "': " + e.what());
  }
}

const Tensor& feed_for(const Node& n, const TensorMap& feeds) {
  auto it = feeds.find(n.name);
  if (it == feeds.end()) throw Error(Errc::MissingFeed, "no feed for Placeholder '" + n.name + "'");
  const Tensor& t = it->second;
  if (n.attr_u32_or("dtype", 0) != 0 || !t.is_f32()) {
    throw Error(Errc::NonF32Execution, "Placeholder '" + n.name + "' is not f32");
  }
  if (auto why = t.check(); !why.empty()) throw Error(Errc::ShapeMismatch, "feed '" + n.name + "': " + why);
  if (auto s = n.attr_shape("shape"); s && *s != t.shape) {
    throw Error(Errc::ShapeMismatch, "feed '" + n.name + "' is " + shape_str(t.shape) + ", expected " +
                                         shape_str(*s));
  }
  return t;
}

namespace {

// Evaluates every node in canonical order and hands each value to `sink`.
template <typename Sink>
void run(const Graph& graph, const TensorMap& feeds, Sink&& sink) {
  const auto order = canonical_order(graph);
  std::vector<Tensor> owned(graph.nodes.size());
  std::vector<const Tensor*> ref(graph.nodes.size(), nullptr);
  std::vector<const Tensor*> in;
  for (auto i : order) {
    const Node& n = graph.nodes[i];
    if (n.op == OpKind::Placeholder) {
      ref[i] = &feed_for(n, feeds);
    } else if (n.op == OpKind::Const) {
      if (!n.value) throw Error(Errc::ValidationFailed, "Const '" + n.name + "' has no value");
      ref[i] = &*n.value;
    } else {
      in.clear();
      for (const auto& e : n.inputs) in.push_back(ref[e.node]);
      owned[i] = eval_node(n, in);
      ref[i] = &owned[i];
    }
    sink(i, in, *ref[i]);
  }
}

}  // namespace

TensorMap execute(const Graph& graph, const TensorMap& feeds) {
  TensorMap out;
  std::vector<bool> wanted(graph.nodes.size(), false);
  for (const auto& name : graph.outputs) {
    auto i = graph.find(name);
    if (!i) throw Error(Errc::ValidationFailed, "unknown output '" + name + "'");
    wanted[*i] = true;
  }
  run(graph, feeds, [&](std::uint32_t i, const std::vector<const Tensor*>&, const Tensor& value) {
    if (wanted[i]) out.emplace(graph.nodes[i].name, value);
  });
  return out;
}

Tensor run_single(const Graph& graph, const Tensor& input) {
  const auto io = find_io(graph);
  auto out = execute(graph, {{io.input_node, input}});
  return std::move(out.at(io.output_node));
}

ExecutionTrace execute_trace(const Graph& graph, const TensorMap& feeds) {
  ExecutionTrace trace;
  std::vector<const Shape*> shapes;
  run(graph, feeds, [&](std::uint32_t i, const std::vector<const Tensor*>& in, const Tensor& value) {
    const Node& n = graph.nodes[i];
    shapes.clear();
    if (n.op != OpKind::Placeholder && n.op != OpKind::Const) {
      for (const Tensor* t : in) shapes.push_back(&t->shape);
    }
    trace.ops[n.name] = node_ops(n, shapes, value.shape);
    trace.values.emplace(n.name, value);
    trace.order.push_back(n.name);
  });
  return trace;
}

std::uint64_t node_ops(const Node& node, const std::vector<const Shape*>& in, const Shape& out) {
  const auto out_n = static_cast<std::uint64_t>(num_elements(out));
  switch (node.op) {
    case OpKind::Placeholder:
    case OpKind::Const:
    case OpKind::Reshape:
      return 0;
    case OpKind::Conv2D: {
      const Shape& w = *in[1];
      return 2ull * w[0] * w[1] * w[2] * w[3] * out[0] * out[1];
    }
    case OpKind::Dense: {
      const Shape& w = *in[1];
      return 2ull * w[0] * w[1];
    }
    case OpKind::MaxPool2D: {
      const std::uint64_t k = node.attr_u32_or("kernel", 2);
      return out_n * k * k;
    }
    case OpKind::GlobalMaxPool:
      return num_elements(*in[0]);
    default:
      return out_n;
  }
}

namespace {

std::uint64_t total_ops(const Graph& graph, const ShapeMap& shapes) {
  std::uint64_t total = 0;
  std::vector<const Shape*> in;
  for (const auto& n : graph.nodes) {
    in.clear();
    for (const auto& e : n.inputs) in.push_back(&shapes.at(graph.nodes[e.node].name));
    total += node_ops(n, in, shapes.at(n.name));
  }
  return total;
}

}  // namespace

std::uint64_t count_ops(const Graph& graph, const Shape& input_shape) {
  return total_ops(graph, infer_shapes(graph, input_shape));
}

std::uint64_t count_ops(const Graph& graph) { return total_ops(graph, infer_shapes(graph)); }

}  // namespace graft
