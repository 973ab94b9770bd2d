#pragma once

#include "graft/graph.hpp"
#include "graft/interpreter.hpp"

namespace graft {

/// Ops the trainer can differentiate through. Sign, Softmax, Broadcast and
/// Resize are inference-only.
bool is_differentiable(OpKind op);

/// Reverse-mode gradients of every Const node, given upstream gradients for
/// any set of nodes (`seeds`, keyed by node name, shaped like the node).
/// ReLU's subgradient at 0 is 0; max pooling routes to the first maximum in
/// row-major scan order. Throws NonDifferentiableOp.
TensorMap backward(const Graph& graph, const TensorMap& feeds, const TensorMap& seeds);

/// Forward values of every node, kept for a following backward pass. Feeds
/// are copied; Const values are referenced from the graph.
struct Tape {
  const Graph* graph = nullptr;
  std::vector<std::uint32_t> order;
  std::vector<Tensor> owned;
  std::vector<const Tensor*> value;  // per node index
};

Tape record(const Graph& graph, const TensorMap& feeds);

/// Gradients for Const nodes, indexed like graph.nodes (empty tensors for
/// everything else).
std::vector<Tensor> backward(const Tape& tape, const TensorMap& seeds);

}  // namespace graft
