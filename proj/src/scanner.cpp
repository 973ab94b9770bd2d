#include "graft/scanner.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

#include "graft/codec.hpp"
#include "graft/error.hpp"

namespace graft {

std::string_view evidence_name(Evidence e) {
  switch (e) {
    case Evidence::SignOp: return "SignOp";
    case Evidence::ParallelBypass: return "ParallelBypass";
    case Evidence::ConstFedSelector: return "ConstFedSelector";
    case Evidence::MaskPairPattern: return "MaskPairPattern";
  }
  return "?";
}

std::string_view severity_name(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Suspicious: return "suspicious";
    case Severity::High: return "high";
  }
  return "?";
}

std::string_view verdict_name(Verdict v) { return v == Verdict::Clean ? "clean" : "suspicious"; }

std::size_t ScanReport::count(Severity at_least) const {
  return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(), [&](const Finding& f) {
    return static_cast<int>(f.severity) >= static_cast<int>(at_least);
  }));
}

namespace {

using Index = std::uint32_t;

struct Analysis {
  const Graph& g;
  std::vector<std::vector<Index>> cons;
  std::vector<bool> input_dependent;
  ShapeMap shapes;

  explicit Analysis(const Graph& graph) : g(graph), cons(consumers(graph)) {
    input_dependent.assign(g.nodes.size(), false);
    for (auto i : canonical_order(g)) {
      const Node& n = g.nodes[i];
      bool dep = n.op == OpKind::Placeholder;
      for (const auto& e : n.inputs) dep = dep || input_dependent[e.node];
      input_dependent[i] = dep;
    }
    shapes = infer_shapes(g);
  }

  [[nodiscard]] OpKind op(Index i) const { return g.nodes[i].op; }
  [[nodiscard]] Index in(Index i, std::size_t k) const { return g.nodes[i].inputs[k].node; }
  [[nodiscard]] std::size_t elements(Index i) const { return num_elements(shapes.at(g.nodes[i].name)); }

  [[nodiscard]] bool is_ones(Index i) const {
    const Node& n = g.nodes[i];
    if (n.op != OpKind::Const || !n.value || n.value->size() == 0) return false;
    return std::all_of(n.value->values.begin(), n.value->values.end(), [](float v) { return v == 1.0f; });
  }
};

// The seven operators of one conditional, or nothing.
std::optional<std::vector<Index>> match_mask_pair(const Analysis& a, Index y) {
  if (a.op(y) != OpKind::Add || a.g.nodes[y].inputs.size() != 2) return std::nullopt;
  for (int order = 0; order < 2; ++order) {
    const Index pick_a = a.in(y, order), pick_b = a.in(y, 1 - order);
    if (a.op(pick_a) != OpKind::Mul || a.op(pick_b) != OpKind::Mul) continue;
    for (int side = 0; side < 2; ++side) {
      const Index mask_a = a.in(pick_a, side), branch_a = a.in(pick_a, 1 - side);
      if (a.op(mask_a) != OpKind::Broadcast || a.in(mask_a, 1) != branch_a) continue;
      const Index sign = a.in(mask_a, 0);
      if (a.op(sign) != OpKind::Sign) continue;
      const Index relu = a.in(sign, 0);
      if (a.op(relu) != OpKind::ReLU) continue;
      for (int bside = 0; bside < 2; ++bside) {
        const Index mask_b = a.in(pick_b, bside);
        if (a.op(mask_b) != OpKind::Sub || a.in(mask_b, 1) != mask_a || !a.is_ones(a.in(mask_b, 0))) continue;
        return std::vector<Index>{relu, sign, mask_a, mask_b, pick_a, pick_b, y};
      }
    }
  }
  return std::nullopt;
}

// Vertex-disjoint source->sink paths via unit-capacity max flow on the
// node-split graph, stopping at `limit`.
int disjoint_paths(const Analysis& a, const std::vector<Index>& sources, Index sink, int limit) {
  const std::size_t n = a.g.nodes.size();
  // Vertex v becomes v_in = 2v and v_out = 2v + 1; node 2n is the super source.
  const std::size_t S = 2 * n, V = 2 * n + 1;
  struct Arc {
    std::size_t to;
    int cap;
    std::size_t rev;
  };
  std::vector<std::vector<Arc>> adj(V);
  auto add = [&](std::size_t u, std::size_t v, int cap) {
    adj[u].push_back({v, cap, adj[v].size()});
    adj[v].push_back({u, 0, adj[u].size() - 1});
  };
  for (std::size_t v = 0; v < n; ++v) {
    const bool endpoint = v == sink || std::find(sources.begin(), sources.end(), v) != sources.end();
    add(2 * v, 2 * v + 1, endpoint ? limit : 1);
    for (const auto& e : a.g.nodes[v].inputs) add(2 * e.node + 1, 2 * v, 1);
  }
  for (auto s : sources) add(S, 2 * s, limit);
  const std::size_t T = 2 * static_cast<std::size_t>(sink) + 1;

  int flow = 0;
  while (flow < limit) {
    std::vector<std::pair<std::size_t, std::size_t>> prev(V, {SIZE_MAX, 0});
    std::deque<std::size_t> q{S};
    prev[S] = {S, 0};
    while (!q.empty() && prev[T].first == SIZE_MAX) {
      const auto u = q.front();
      q.pop_front();
      for (std::size_t k = 0; k < adj[u].size(); ++k) {
        const auto& arc = adj[u][k];
        if (arc.cap > 0 && prev[arc.to].first == SIZE_MAX) {
          prev[arc.to] = {u, k};
          q.push_back(arc.to);
        }
      }
    }
    if (prev[T].first == SIZE_MAX) break;
    for (std::size_t v = T; v != S;) {
      auto [u, k] = prev[v];
      adj[u][k].cap -= 1;
      adj[v][adj[u][k].rev].cap += 1;
      v = u;
    }
    ++flow;
  }
  return flow;
}

std::vector<std::string> names(const Graph& g, const std::vector<Index>& idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(g.nodes[i].name);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

ScanReport scan_graph(const Graph& graph) {
  require_valid(graph);
  const Analysis a(graph);
  ScanReport report;

  std::set<Index> covered_signs;
  for (Index i = 0; i < graph.nodes.size(); ++i) {
    if (auto m = match_mask_pair(a, i)) {
      covered_signs.insert((*m)[1]);
      report.findings.push_back({Evidence::MaskPairPattern, Severity::High, names(graph, *m),
                                 "if-then-else built from relu, sign and complementary masks"});
    }
  }
  for (Index i = 0; i < graph.nodes.size(); ++i) {
    if (a.op(i) == OpKind::Sign && !covered_signs.contains(i)) {
      report.findings.push_back({Evidence::SignOp, Severity::Suspicious, names(graph, {i}),
                                 "Sign is rare in inference graphs"});
    }
  }

  std::vector<Index> sources;
  for (Index i = 0; i < graph.nodes.size(); ++i) {
    if (a.op(i) == OpKind::Placeholder) sources.push_back(i);
  }
  for (const auto& out_name : graph.outputs) {
    const Index out = *graph.find(out_name);
    // Nodes within three hops upstream of the output.
    std::vector<int> hops(graph.nodes.size(), -1);
    std::deque<Index> q{out};
    hops[out] = 0;
    std::vector<std::pair<Index, Index>> selectors;  // (node, constant operand)
    while (!q.empty()) {
      const Index v = q.front();
      q.pop_front();
      const Node& n = graph.nodes[v];
      if ((n.op == OpKind::Mul || n.op == OpKind::Add) && a.input_dependent[v] && a.elements(v) > 1) {
        for (const auto& e : n.inputs) {
          if (!a.input_dependent[e.node] && a.elements(e.node) == a.elements(v)) selectors.emplace_back(v, e.node);
        }
      }
      if (hops[v] == 3) continue;
      for (const auto& e : n.inputs) {
        if (hops[e.node] < 0) {
          hops[e.node] = hops[v] + 1;
          q.push_back(e.node);
        }
      }
    }
    if (selectors.empty()) continue;
    const int paths = sources.empty() ? 0 : disjoint_paths(a, sources, out, 8);
    for (const auto& [node, constant] : selectors) {
      report.findings.push_back({Evidence::ConstFedSelector, Severity::Info, names(graph, {node, constant}),
                                 "output-sized constant mixed in near the output"});
      if (paths >= 2) {
        report.findings.push_back({Evidence::ParallelBypass, Severity::Suspicious, names(graph, {node, constant}),
                                   std::to_string(paths) + " vertex-disjoint input-to-output paths"});
      }
    }
  }

  std::sort(report.findings.begin(), report.findings.end(), [](const Finding& x, const Finding& y) {
    if (x.severity != y.severity) return x.severity > y.severity;
    if (x.kind != y.kind) return x.kind < y.kind;
    return x.nodes < y.nodes;
  });
  report.verdict = report.count(Severity::Suspicious) > 0 ? Verdict::Suspicious : Verdict::Clean;
  return report;
}

ScanReport scan(std::span<const std::uint8_t> model) { return scan_graph(decode(model)); }

namespace {

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace

std::string format_scan(const ScanReport& r, ScanFormat format) {
  std::ostringstream os;
  if (format == ScanFormat::Tsv) {
    os << "kind\tseverity\tnodes\tdetail\n";
    for (const auto& f : r.findings) {
      os << evidence_name(f.kind) << '\t' << severity_name(f.severity) << '\t' << join(f.nodes, ',') << '\t'
         << f.detail << '\n';
    }
    os << "verdict\t" << verdict_name(r.verdict) << "\t\t\n";
  } else {
    for (const auto& f : r.findings) {
      os << '[' << severity_name(f.severity) << "] " << evidence_name(f.kind) << ": " << f.detail << " ("
         << join(f.nodes, ' ') << ")\n";
    }
    os << "verdict: " << verdict_name(r.verdict) << '\n';
  }
  return os.str();
}

// --- diff -------------------------------------------------------------------

namespace {

constexpr Index kNone = UINT32_MAX;

bool same_local(const Node& x, const Node& y) {
  return x.op == y.op && x.attrs == y.attrs && x.inputs.size() == y.inputs.size();
}

bool same_value(const Node& x, const Node& y) {
  return x.value && y.value && x.value->shape == y.value->shape && bit_equal(*x.value, *y.value);
}

}  // namespace

GraphDiff diff_graphs(const Graph& a, const Graph& b) {
  require_valid(a);
  require_valid(b);
  std::vector<Index> a_of_b(b.nodes.size(), kNone), b_of_a(a.nodes.size(), kNone);
  const auto a_order = canonical_order(a);
  const auto b_order = canonical_order(b);

  // Candidates for b's node: unmatched, same op and attributes, non-constant
  // inputs already paired, constant inputs still free. Ranked by how many
  // constant operands agree so identical twins pair with each other.
  for (auto bi : b_order) {
    const Node& bn = b.nodes[bi];
    if (bn.op == OpKind::Const) continue;
    Index best = kNone;
    int best_score = -1;
    for (auto ai : a_order) {
      if (b_of_a[ai] != kNone) continue;
      const Node& an = a.nodes[ai];
      if (!same_local(an, bn)) continue;
      bool ok = true;
      int score = 0;
      for (std::size_t k = 0; k < bn.inputs.size() && ok; ++k) {
        const Index bk = bn.inputs[k].node, ak = an.inputs[k].node;
        if (bn.inputs[k].slot != an.inputs[k].slot) ok = false;
        else if (b.nodes[bk].op == OpKind::Const) {
          if (a.nodes[ak].op != OpKind::Const) ok = false;
          else if (b_of_a[ak] != kNone && b_of_a[ak] != bk) ok = false;
          else if (same_value(a.nodes[ak], b.nodes[bk])) ++score;
        } else if (b_of_a[ak] != bk) {
          ok = false;
        }
      }
      if (ok && score > best_score) {
        best = ai;
        best_score = score;
      }
    }
    if (best == kNone) continue;
    a_of_b[bi] = best;
    b_of_a[best] = bi;
    const Node& an = a.nodes[best];
    for (std::size_t k = 0; k < bn.inputs.size(); ++k) {
      const Index bk = bn.inputs[k].node, ak = an.inputs[k].node;
      if (b.nodes[bk].op == OpKind::Const && a_of_b[bk] == kNone) {
        a_of_b[bk] = ak;
        b_of_a[ak] = bk;
      }
    }
  }

  GraphDiff d;
  for (Index bi = 0; bi < b.nodes.size(); ++bi) {
    if (a_of_b[bi] == kNone) {
      d.added.push_back(b.nodes[bi].name);
    } else if (b.nodes[bi].op == OpKind::Const && !same_value(a.nodes[a_of_b[bi]], b.nodes[bi])) {
      d.modified.emplace_back(a.nodes[a_of_b[bi]].name, b.nodes[bi].name);
    }
  }
  for (Index ai = 0; ai < a.nodes.size(); ++ai) {
    if (b_of_a[ai] == kNone) d.removed.push_back(a.nodes[ai].name);
  }
  std::sort(d.added.begin(), d.added.end());
  std::sort(d.removed.begin(), d.removed.end());
  std::sort(d.modified.begin(), d.modified.end());
  return d;
}

GraphDiff diff(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  return diff_graphs(decode(a), decode(b));
}

std::string format_diff(const GraphDiff& d) {
  std::ostringstream os;
  os << "change\tnode_a\tnode_b\n";
  for (const auto& n : d.added) os << "added\t\t" << n << '\n';
  for (const auto& n : d.removed) os << "removed\t" << n << "\t\n";
  for (const auto& [x, y] : d.modified) os << "modified\t" << x << '\t' << y << '\n';
  return os.str();
}

}  // namespace graft
