#include "graft/graph.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <queue>
#include <set>
#include <sstream>

#include "graft/error.hpp"

namespace graft {

namespace {

constexpr std::array<std::string_view, kOpKindCount> kOpNames = {
    "Placeholder", "Const", "Conv2D", "Dense",   "ReLU",   "Sigmoid",   "Softmax",
    "Sign",        "Add",   "Sub",    "Mul",     "Reshape", "Broadcast", "Concat",
    "MaxPool2D",   "GlobalMaxPool", "Resize"};

}  // namespace

std::string_view op_name(OpKind op) {
  auto i = static_cast<std::size_t>(op);
  return i < kOpNames.size() ? kOpNames[i] : "?";
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

int op_arity(OpKind op) {
  switch (op) {
    case OpKind::Placeholder:
    case OpKind::Const:
      return 0;
    case OpKind::Conv2D:
    case OpKind::Dense:
      return 3;  // data, weights, bias
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::Broadcast:  // value, shape donor
      return 2;
    case OpKind::Concat:
      return -1;
    default:
      return 1;
  }
}

std::optional<std::uint32_t> Node::attr_u32(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) return std::nullopt;
  if (auto* v = std::get_if<std::uint32_t>(&it->second)) return *v;
  return std::nullopt;
}

std::optional<float> Node::attr_f32(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) return std::nullopt;
  if (auto* v = std::get_if<float>(&it->second)) return *v;
  return std::nullopt;
}

std::optional<Shape> Node::attr_shape(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) return std::nullopt;
  if (auto* v = std::get_if<Shape>(&it->second)) return *v;
  return std::nullopt;
}

std::optional<std::uint32_t> Graph::find(std::string_view name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].name == name) return static_cast<std::uint32_t>(i);
  }
  return std::nullopt;
}

const Node& Graph::node(std::string_view name) const {
  auto i = find(name);
  if (!i) throw Error(Errc::ValidationFailed, "no node named '" + std::string(name) + "'");
  return nodes[*i];
}

// --- builder ----------------------------------------------------------------

GraphBuilder::GraphBuilder(Graph base) : graph_(std::move(base)) {
  for (std::size_t i = 0; i < graph_.nodes.size(); ++i) {
    if (!index_.emplace(graph_.nodes[i].name, static_cast<std::uint32_t>(i)).second) {
      throw Error(Errc::NameCollision, "duplicate node '" + graph_.nodes[i].name + "'");
    }
  }
}

std::uint32_t GraphBuilder::add(Node node) {
  if (index_.contains(node.name)) {
    throw Error(Errc::NameCollision, "node '" + node.name + "' already exists");
  }
  auto id = static_cast<std::uint32_t>(graph_.nodes.size());
  index_.emplace(node.name, id);
  graph_.nodes.push_back(std::move(node));
  return id;
}

std::uint32_t GraphBuilder::placeholder(const std::string& name, Shape shape, DType dtype) {
  Node n{.name = name, .op = OpKind::Placeholder};
  n.attrs["shape"] = std::move(shape);
  if (dtype != DType::F32) n.attrs["dtype"] = static_cast<std::uint32_t>(dtype);
  return add(std::move(n));
}

std::uint32_t GraphBuilder::constant(const std::string& name, Tensor value) {
  Node n{.name = name, .op = OpKind::Const};
  n.value = std::move(value);
  return add(std::move(n));
}

std::uint32_t GraphBuilder::op(const std::string& name, OpKind op,
                               const std::vector<std::uint32_t>& inputs, Attrs attrs) {
  Node n{.name = name, .op = op, .attrs = std::move(attrs)};
  for (auto i : inputs) n.inputs.push_back(Edge{i, 0});
  return add(std::move(n));
}

std::uint32_t GraphBuilder::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(Errc::ValidationFailed, "no node named '" + name + "'");
  return it->second;
}

// --- validation -------------------------------------------------------------

std::string_view rule_name(Rule rule) {
  switch (rule) {
    case Rule::CycleDetected: return "CycleDetected";
    case Rule::ArityMismatch: return "ArityMismatch";
    case Rule::DanglingEdge: return "DanglingEdge";
    case Rule::BadSlot: return "BadSlot";
    case Rule::DuplicateName: return "DuplicateName";
    case Rule::EmptyName: return "EmptyName";
    case Rule::MissingConstValue: return "MissingConstValue";
    case Rule::UnexpectedConstValue: return "UnexpectedConstValue";
    case Rule::BadConstValue: return "BadConstValue";
    case Rule::MissingAttr: return "MissingAttr";
    case Rule::UnknownOutput: return "UnknownOutput";
    case Rule::DuplicateOutput: return "DuplicateOutput";
    case Rule::DanglingNode: return "DanglingNode";
    case Rule::ConsumedOutput: return "ConsumedOutput";
  }
  return "?";
}

namespace {

// Nodes that sit on (or between) cycles: what is left after peeling sources
// forward and sinks backward.
std::vector<std::uint32_t> cyclic_core(const Graph& g) {
  const auto n = g.nodes.size();
  std::vector<std::vector<std::uint32_t>> succ(n), pred(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (const auto& e : g.nodes[i].inputs) {
      if (e.node < n) {
        succ[e.node].push_back(i);
        pred[i].push_back(e.node);
      }
    }
  }
  std::vector<bool> alive(n, true);
  auto peel = [&](const std::vector<std::vector<std::uint32_t>>& in,
                  const std::vector<std::vector<std::uint32_t>>& out) {
    std::vector<std::size_t> deg(n, 0);
    std::queue<std::uint32_t> q;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (auto p : in[i]) deg[i] += alive[p] ? 1 : 0;
      if (deg[i] == 0) q.push(i);
    }
    while (!q.empty()) {
      auto v = q.front();
      q.pop();
      alive[v] = false;
      for (auto s : out[v]) {
        if (alive[s] && --deg[s] == 0) q.push(s);
      }
    }
  };
  peel(pred, succ);
  peel(succ, pred);
  std::vector<std::uint32_t> core;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (alive[i]) core.push_back(i);
  }
  return core;
}

}  // namespace

std::vector<Violation> validate(const Graph& g) {
  std::vector<Violation> out;
  const auto n = g.nodes.size();
  std::set<std::string> seen;
  for (const auto& node : g.nodes) {
    if (node.name.empty()) out.push_back({Rule::EmptyName, {node.name}, "node name is empty"});
    if (!seen.insert(node.name).second) {
      out.push_back({Rule::DuplicateName, {node.name}, "name used more than once"});
    }
  }

  bool edges_ok = true;
  for (const auto& node : g.nodes) {
    const int arity = op_arity(node.op);
    const auto k = node.inputs.size();
    if ((arity >= 0 && k != static_cast<std::size_t>(arity)) || (arity < 0 && k == 0)) {
      out.push_back({Rule::ArityMismatch,
                     {node.name},
                     std::string(op_name(node.op)) + " takes " +
                         (arity < 0 ? std::string("one or more") : std::to_string(arity)) +
                         " inputs, has " + std::to_string(k)});
    }
    for (const auto& e : node.inputs) {
      if (e.node >= n) {
        edges_ok = false;
        out.push_back({Rule::DanglingEdge, {node.name},
                       "input references node index " + std::to_string(e.node)});
      } else if (e.slot != 0) {
        out.push_back({Rule::BadSlot, {node.name},
                       "every op has a single output; slot " + std::to_string(e.slot)});
      }
    }
    if (node.op == OpKind::Const) {
      if (!node.value) {
        out.push_back({Rule::MissingConstValue, {node.name}, "Const without a value"});
      } else if (auto why = node.value->check(); !why.empty()) {
        out.push_back({Rule::BadConstValue, {node.name}, why});
      }
    } else if (node.value) {
      out.push_back({Rule::UnexpectedConstValue, {node.name}, "only Const nodes carry values"});
    }
    auto need = [&](const char* key) {
      if (!node.attrs.contains(key)) {
        out.push_back({Rule::MissingAttr, {node.name}, std::string("missing attr '") + key + "'"});
      }
    };
    switch (node.op) {
      case OpKind::Placeholder:
      case OpKind::Reshape:
      case OpKind::Resize:
        need("shape");
        break;
      case OpKind::MaxPool2D:
        need("kernel");
        break;
      default:
        break;
    }
  }

  if (edges_ok) {
    auto core = cyclic_core(g);
    if (!core.empty()) {
      Violation v{Rule::CycleDetected, {}, "edge relation is cyclic"};
      for (auto i : core) v.nodes.push_back(g.nodes[i].name);
      std::sort(v.nodes.begin(), v.nodes.end());
      out.push_back(std::move(v));
    }
  }

  std::vector<std::size_t> outdeg(n, 0);
  for (const auto& node : g.nodes) {
    for (const auto& e : node.inputs) {
      if (e.node < n) ++outdeg[e.node];
    }
  }
  std::set<std::string> declared;
  for (const auto& name : g.outputs) {
    if (!declared.insert(name).second) {
      out.push_back({Rule::DuplicateOutput, {name}, "declared output listed twice"});
    }
    auto idx = g.find(name);
    if (!idx) {
      out.push_back({Rule::UnknownOutput, {name}, "declared output does not exist"});
    } else if (outdeg[*idx] != 0) {
      out.push_back({Rule::ConsumedOutput, {name}, "declared output feeds other nodes"});
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (outdeg[i] == 0 && !declared.contains(g.nodes[i].name)) {
      out.push_back({Rule::DanglingNode, {g.nodes[i].name}, "result is never consumed"});
    }
  }
  return out;
}

std::string describe(const std::vector<Violation>& violations) {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    const auto& v = violations[i];
    if (i) os << "; ";
    os << rule_name(v.rule) << '{';
    for (std::size_t j = 0; j < v.nodes.size(); ++j) os << (j ? "," : "") << v.nodes[j];
    os << "} " << v.detail;
  }
  return os.str();
}

void require_valid(const Graph& graph) {
  auto v = validate(graph);
  if (!v.empty()) throw Error(Errc::ValidationFailed, describe(v));
}

std::vector<std::uint32_t> canonical_order(const Graph& g) {
  const auto n = g.nodes.size();
  std::vector<std::size_t> indeg(n, 0);
  std::vector<std::vector<std::uint32_t>> succ(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (const auto& e : g.nodes[i].inputs) {
      if (e.node >= n) throw Error(Errc::ValidationFailed, "dangling edge in '" + g.nodes[i].name + "'");
      ++indeg[i];
      succ[e.node].push_back(i);
    }
  }
  auto later = [&](std::uint32_t a, std::uint32_t b) { return g.nodes[a].name > g.nodes[b].name; };
  std::priority_queue<std::uint32_t, std::vector<std::uint32_t>, decltype(later)> ready(later);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (indeg[i] == 0) ready.push(i);
  }
  std::vector<std::uint32_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    auto v = ready.top();
    ready.pop();
    order.push_back(v);
    for (auto s : succ[v]) {
      if (--indeg[s] == 0) ready.push(s);
    }
  }
  if (order.size() != n) throw Error(Errc::ValidationFailed, "graph contains a cycle");
  return order;
}

std::vector<std::vector<std::uint32_t>> consumers(const Graph& g) {
  std::vector<std::vector<std::uint32_t>> out(g.nodes.size());
  for (std::uint32_t i = 0; i < g.nodes.size(); ++i) {
    for (const auto& e : g.nodes[i].inputs) {
      if (e.node < out.size() && (out[e.node].empty() || out[e.node].back() != i)) {
        out[e.node].push_back(i);
      }
    }
  }
  return out;
}

bool structurally_equal(const Graph& a, const Graph& b) {
  if (a.nodes.size() != b.nodes.size() || a.outputs != b.outputs) return false;
  std::unordered_map<std::string, const Node*> by_name;
  for (const auto& n : b.nodes) by_name.emplace(n.name, &n);
  if (by_name.size() != b.nodes.size()) return false;
  for (const auto& na : a.nodes) {
    auto it = by_name.find(na.name);
    if (it == by_name.end()) return false;
    const Node& nb = *it->second;
    if (na.op != nb.op || na.attrs != nb.attrs || na.inputs.size() != nb.inputs.size()) return false;
    if (na.value.has_value() != nb.value.has_value()) return false;
    if (na.value && !bit_equal(*na.value, *nb.value)) return false;
    for (std::size_t k = 0; k < na.inputs.size(); ++k) {
      const auto& ea = na.inputs[k];
      const auto& eb = nb.inputs[k];
      if (ea.slot != eb.slot || ea.node >= a.nodes.size() || eb.node >= b.nodes.size()) return false;
      if (a.nodes[ea.node].name != b.nodes[eb.node].name) return false;
    }
  }
  return true;
}

Graph rename_node(const Graph& graph, const std::string& from, const std::string& to) {
  if (graph.find(to)) throw Error(Errc::NameCollision, "node '" + to + "' already exists");
  Graph g = graph;
  for (auto& n : g.nodes) {
    if (n.name == from) n.name = to;
  }
  for (auto& o : g.outputs) {
    if (o == from) o = to;
  }
  return g;
}

}  // namespace graft
