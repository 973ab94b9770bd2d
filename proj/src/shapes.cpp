#include <algorithm>

#include "graft/error.hpp"
#include "graft/graph.hpp"
#include "graft/kernels.hpp"

namespace graft {

namespace {

[[noreturn]] void mismatch(const Node& n, const std::string& what) {
  throw Error(Errc::ShapeMismatch, "'" + n.name + "': " + what);
}

void need_rank(const Node& n, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw Error(Errc::UnknownRank, "'" + n.name + "': " + std::string(op_name(n.op)) + " expects rank " +
                                       std::to_string(rank) + ", got " + shape_str(s));
  }
}

Shape node_shape(const Node& n, const std::vector<const Shape*>& in) {
  switch (n.op) {
    case OpKind::Placeholder: {
      auto s = n.attr_shape("shape");
      if (!s) throw Error(Errc::UnknownRank, "'" + n.name + "': Placeholder without shape");
      return *s;
    }
    case OpKind::Const:
      if (!n.value) throw Error(Errc::UnknownRank, "'" + n.name + "': Const without value");
      return n.value->shape;
    case OpKind::Conv2D: {
      const Shape& x = *in[0];
      const Shape& w = *in[1];
      need_rank(n, x, 3);
      need_rank(n, w, 4);
      if (w[2] != x[2]) mismatch(n, "weights expect " + std::to_string(w[2]) + " input channels");
      if (num_elements(*in[2]) != w[3]) mismatch(n, "bias length differs from Cout");
      const auto pad = static_cast<Padding>(n.attr_u32_or("padding", 0));
      const auto stride = n.attr_u32_or("stride", 1);
      try {
        return {kernels::window(x[0], w[0], stride, pad).out, kernels::window(x[1], w[1], stride, pad).out,
                w[3]};
      } catch (const Error& e) {
        mismatch(n, e.what());
      }
    }
    case OpKind::Dense: {
      const Shape& w = *in[1];
      need_rank(n, w, 2);
      if (num_elements(*in[0]) != w[0]) {
        mismatch(n, "input has " + std::to_string(num_elements(*in[0])) + " elements, weights expect " +
                        std::to_string(w[0]));
      }
      if (num_elements(*in[2]) != w[1]) mismatch(n, "bias length differs from Out");
      return {w[1]};
    }
    case OpKind::ReLU:
    case OpKind::Sigmoid:
    case OpKind::Softmax:
    case OpKind::Sign:
      return *in[0];
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      auto s = kernels::binary_shape(*in[0], *in[1]);
      if (!s) mismatch(n, "cannot combine " + shape_str(*in[0]) + " with " + shape_str(*in[1]));
      return *s;
    }
    case OpKind::Reshape: {
      auto s = n.attr_shape("shape");
      if (!s) throw Error(Errc::UnknownRank, "'" + n.name + "': Reshape without target shape");
      if (s->size() > kMaxRank) throw Error(Errc::UnknownRank, "'" + n.name + "': rank exceeds 4");
      if (num_elements(*s) != num_elements(*in[0])) {
        mismatch(n, "cannot reshape " + shape_str(*in[0]) + " to " + shape_str(*s));
      }
      return *s;
    }
    case OpKind::Broadcast:
      if (!kernels::broadcastable(*in[0], *in[1])) {
        mismatch(n, "cannot broadcast " + shape_str(*in[0]) + " to " + shape_str(*in[1]));
      }
      return *in[1];
    case OpKind::Concat: {
      const Shape& first = *in[0];
      const auto axis = n.attr_u32_or("axis", first.empty() ? 0 : static_cast<std::uint32_t>(first.size() - 1));
      if (axis >= first.size()) mismatch(n, "axis out of range");
      Shape out = first;
      out[axis] = 0;
      for (const Shape* s : in) {
        if (s->size() != first.size()) mismatch(n, "inputs differ in rank");
        for (std::size_t d = 0; d < first.size(); ++d) {
          if (d != axis && (*s)[d] != first[d]) mismatch(n, "inputs differ off-axis");
        }
        out[axis] += (*s)[axis];
      }
      return out;
    }
    case OpKind::MaxPool2D: {
      const Shape& x = *in[0];
      need_rank(n, x, 3);
      const auto k = n.attr_u32_or("kernel", 2);
      const auto stride = n.attr_u32_or("stride", k);
      const auto pad = static_cast<Padding>(n.attr_u32_or("padding", 0));
      try {
        return {kernels::window(x[0], k, stride, pad).out, kernels::window(x[1], k, stride, pad).out, x[2]};
      } catch (const Error& e) {
        mismatch(n, e.what());
      }
    }
    case OpKind::GlobalMaxPool:
      need_rank(n, *in[0], 3);
      return {1, 1, (*in[0])[2]};
    case OpKind::Resize: {
      need_rank(n, *in[0], 3);
      auto s = n.attr_shape("shape");
      if (!s || s->size() != 2 || (*s)[0] == 0 || (*s)[1] == 0) {
        mismatch(n, "Resize needs a positive (H, W) target");
      }
      return {(*s)[0], (*s)[1], (*in[0])[2]};
    }
  }
  throw Error(Errc::UnknownRank, "'" + n.name + "': unknown op");
}

ShapeMap infer_impl(const Graph& graph, const std::optional<Shape>& input_override) {
  std::optional<std::uint32_t> input;
  if (input_override) {
    for (std::uint32_t i = 0; i < graph.nodes.size(); ++i) {
      if (graph.nodes[i].op != OpKind::Placeholder) continue;
      if (input) throw Error(Errc::MultipleInputs, "graph has more than one Placeholder");
      input = i;
    }
    if (!input) throw Error(Errc::NoInput, "graph has no Placeholder");
  }
  const auto order = canonical_order(graph);
  std::vector<Shape> shapes(graph.nodes.size());
  std::vector<const Shape*> in;
  for (auto i : order) {
    const Node& n = graph.nodes[i];
    const int arity = op_arity(n.op);
    if ((arity >= 0 && n.inputs.size() != static_cast<std::size_t>(arity)) ||
        (arity < 0 && n.inputs.empty())) {
      throw Error(Errc::ValidationFailed, "'" + n.name + "': arity mismatch");
    }
    in.clear();
    for (const auto& e : n.inputs) in.push_back(&shapes[e.node]);
    shapes[i] = (input && *input == i) ? *input_override : node_shape(n, in);
  }
  ShapeMap out;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) out.emplace(graph.nodes[i].name, shapes[i]);
  return out;
}

}  // namespace

ShapeMap infer_shapes(const Graph& graph) { return infer_impl(graph, std::nullopt); }

ShapeMap infer_shapes(const Graph& graph, const Shape& input_shape) {
  return infer_impl(graph, input_shape);
}

IoSignature find_io(const Graph& graph) {
  std::vector<std::uint32_t> inputs;
  std::vector<std::size_t> outdeg(graph.nodes.size(), 0);
  for (std::uint32_t i = 0; i < graph.nodes.size(); ++i) {
    const Node& n = graph.nodes[i];
    if (n.op == OpKind::Placeholder) inputs.push_back(i);
    for (const auto& e : n.inputs) {
      if (e.node < outdeg.size()) ++outdeg[e.node];
    }
  }
  if (inputs.empty()) throw Error(Errc::NoInput, "no Placeholder node");
  if (inputs.size() > 1) throw Error(Errc::MultipleInputs, std::to_string(inputs.size()) + " Placeholder nodes");

  std::vector<std::uint32_t> sinks;
  for (std::uint32_t i = 0; i < graph.nodes.size(); ++i) {
    if (outdeg[i] == 0 && graph.nodes[i].op != OpKind::Placeholder) sinks.push_back(i);
  }
  if (sinks.empty()) throw Error(Errc::NoOutput, "no node with outdegree 0");
  if (sinks.size() > 1) throw Error(Errc::MultipleOutputs, std::to_string(sinks.size()) + " sink nodes");

  const Node& in = graph.nodes[inputs[0]];
  const Node& out = graph.nodes[sinks[0]];
  if (std::find(graph.outputs.begin(), graph.outputs.end(), out.name) == graph.outputs.end()) {
    throw Error(Errc::NoOutput, "sink '" + out.name + "' is not a declared output");
  }
  IoSignature sig;
  sig.input_node = in.name;
  sig.input_dtype = static_cast<DType>(in.attr_u32_or("dtype", 0));
  auto shapes = infer_shapes(graph);
  sig.input_shape = shapes.at(in.name);
  sig.output_node = out.name;
  sig.output_shape = shapes.at(out.name);
  return sig;
}

}  // namespace graft
