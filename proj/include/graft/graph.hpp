#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "graft/tensor.hpp"

namespace graft {

// Opcode values are the on-disk NNIR opcodes.
enum class OpKind : std::uint16_t {
  Placeholder = 0,
  Const = 1,
  Conv2D = 2,
  Dense = 3,
  ReLU = 4,
  Sigmoid = 5,
  Softmax = 6,
  Sign = 7,
  Add = 8,
  Sub = 9,
  Mul = 10,
  Reshape = 11,
  Broadcast = 12,
  Concat = 13,
  MaxPool2D = 14,
  GlobalMaxPool = 15,
  Resize = 16,
};

inline constexpr std::uint16_t kOpKindCount = 17;

std::string_view op_name(OpKind op);
std::optional<OpKind> op_from_name(std::string_view name);

/// Number of data inputs an op takes, or -1 for variadic (Concat, at least one).
int op_arity(OpKind op);

enum class Padding : std::uint32_t { Valid = 0, Same = 1 };
enum class ResizeMode : std::uint32_t { Bilinear = 0, Nearest = 1 };

using AttrValue = std::variant<std::uint32_t, float, Shape>;
// Ordered so that encoding is deterministic.
using Attrs = std::map<std::string, AttrValue>;

struct Edge {
  std::uint32_t node = 0;
  std::uint8_t slot = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Node {
  std::string name;
  OpKind op = OpKind::Placeholder;
  std::vector<Edge> inputs;
  Attrs attrs;
  std::optional<Tensor> value;  // Const only

  [[nodiscard]] std::optional<std::uint32_t> attr_u32(const std::string& key) const;
  [[nodiscard]] std::optional<float> attr_f32(const std::string& key) const;
  [[nodiscard]] std::optional<Shape> attr_shape(const std::string& key) const;
  [[nodiscard]] std::uint32_t attr_u32_or(const std::string& key, std::uint32_t fallback) const {
    return attr_u32(key).value_or(fallback);
  }
};

struct Graph {
  std::vector<Node> nodes;
  std::vector<std::string> outputs;

  [[nodiscard]] std::optional<std::uint32_t> find(std::string_view name) const;
  [[nodiscard]] const Node& node(std::string_view name) const;
  [[nodiscard]] std::size_t size() const { return nodes.size(); }
};

/// Appends nodes by name and keeps names unique. Throws NameCollision.
class GraphBuilder {
 public:
  GraphBuilder() = default;
  explicit GraphBuilder(Graph base);

  std::uint32_t add(Node node);
  std::uint32_t placeholder(const std::string& name, Shape shape, DType dtype = DType::F32);
  std::uint32_t constant(const std::string& name, Tensor value);
  std::uint32_t op(const std::string& name, OpKind op, const std::vector<std::uint32_t>& inputs,
                   Attrs attrs = {});

  void mark_output(const std::string& name) { graph_.outputs.push_back(name); }
  void set_outputs(std::vector<std::string> names) { graph_.outputs = std::move(names); }

  [[nodiscard]] bool has(const std::string& name) const { return index_.contains(name); }
  [[nodiscard]] std::uint32_t index(const std::string& name) const;
  [[nodiscard]] const Graph& graph() const { return graph_; }
  Graph finish() && { return std::move(graph_); }

 private:
  Graph graph_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// --- validation -----------------------------------------------------------

enum class Rule {
  CycleDetected,
  ArityMismatch,
  DanglingEdge,
  BadSlot,
  DuplicateName,
  EmptyName,
  MissingConstValue,
  UnexpectedConstValue,
  BadConstValue,
  MissingAttr,
  UnknownOutput,
  DuplicateOutput,
  DanglingNode,
  ConsumedOutput,
};

std::string_view rule_name(Rule rule);

struct Violation {
  Rule rule;
  std::vector<std::string> nodes;
  std::string detail;
};

std::vector<Violation> validate(const Graph& graph);
std::string describe(const std::vector<Violation>& violations);

/// Throws ValidationFailed when validate() is non-empty.
void require_valid(const Graph& graph);

/// Topological order with lexicographic tie-break on node name. Throws
/// ValidationFailed on a cycle or dangling edge.
std::vector<std::uint32_t> canonical_order(const Graph& graph);

/// Per-node consumer lists (indices), in ascending consumer index.
std::vector<std::vector<std::uint32_t>> consumers(const Graph& graph);

/// Name-keyed comparison: same node set, ops, attrs, const payloads, wiring
/// and declared outputs, regardless of node-list order.
bool structurally_equal(const Graph& a, const Graph& b);

/// Copy of `graph` with node `from` renamed to `to` (outputs updated too).
Graph rename_node(const Graph& graph, const std::string& from, const std::string& to);

// --- shapes and I/O ---------------------------------------------------------

using ShapeMap = std::unordered_map<std::string, Shape>;

/// Shapes for every node, from the Placeholders' declared shapes.
ShapeMap infer_shapes(const Graph& graph);
/// Same, with the unique Placeholder's shape overridden by `input_shape`.
ShapeMap infer_shapes(const Graph& graph, const Shape& input_shape);

struct IoSignature {
  std::string input_node;
  Shape input_shape;
  DType input_dtype = DType::F32;
  std::string output_node;
  Shape output_shape;
};

IoSignature find_io(const Graph& graph);

}  // namespace graft
