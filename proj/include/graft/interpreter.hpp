#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "graft/graph.hpp"

namespace graft {

using TensorMap = std::map<std::string, Tensor>;

/// Output of one compute node (not Placeholder/Const) from its input values.
Tensor eval_node(const Node& node, const std::vector<const Tensor*>& inputs);

/// The feed for a Placeholder, checked for dtype and declared shape.
const Tensor& feed_for(const Node& placeholder, const TensorMap& feeds);

/// Runs the graph in canonical topological order and returns the declared
/// outputs by name. Throws MissingFeed, ShapeMismatch or NonF32Execution.
TensorMap execute(const Graph& graph, const TensorMap& feeds);

/// Convenience for single-input, single-output graphs.
Tensor run_single(const Graph& graph, const Tensor& input);

struct ExecutionTrace {
  TensorMap values;                             // every node's output
  std::map<std::string, std::uint64_t> ops;     // per-node scalar-op count
  std::vector<std::string> order;               // evaluation order
};

ExecutionTrace execute_trace(const Graph& graph, const TensorMap& feeds);

/// Scalar-op cost of one node given its input and output shapes:
/// Conv2D 2*kH*kW*Cin*Cout*Hout*Wout, Dense 2*In*Out, pooling counts window
/// reads, Placeholder/Const/Reshape are free, everything else costs one op per
/// output element.
std::uint64_t node_ops(const Node& node, const std::vector<const Shape*>& inputs, const Shape& output);

/// Total cost with the unique Placeholder set to `input_shape`.
std::uint64_t count_ops(const Graph& graph, const Shape& input_shape);
/// Total cost at the Placeholders' declared shapes.
std::uint64_t count_ops(const Graph& graph);

}  // namespace graft
