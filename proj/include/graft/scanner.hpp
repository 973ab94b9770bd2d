#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graft/graph.hpp"

namespace graft {

enum class Evidence { SignOp, ParallelBypass, ConstFedSelector, MaskPairPattern };
enum class Severity { Info = 0, Suspicious = 1, High = 2 };
enum class Verdict { Clean, Suspicious };

std::string_view evidence_name(Evidence e);
std::string_view severity_name(Severity s);
std::string_view verdict_name(Verdict v);

struct Finding {
  Evidence kind = Evidence::SignOp;
  Severity severity = Severity::Info;
  std::vector<std::string> nodes;  // sorted
  std::string detail;
};

struct ScanReport {
  std::vector<Finding> findings;
  Verdict verdict = Verdict::Clean;  // Suspicious iff some finding is at least Suspicious

  [[nodiscard]] std::size_t count(Severity at_least) const;
};

/// Purely structural; node names never influence a finding.
///  - MaskPairPattern (high): relu -> sign -> broadcast -> {mul, 1 - mask -> mul} -> add.
///  - SignOp (suspicious): a Sign outside any matched mask pair.
///  - ConstFedSelector (info): Mul/Add within three hops of an output whose
///    other operand is input-independent and as large as its result.
///  - ParallelBypass (suspicious): a ConstFedSelector on one of at least two
///    vertex-disjoint input-to-output paths.
ScanReport scan_graph(const Graph& graph);
/// Throws ModelDecodingError.
ScanReport scan(std::span<const std::uint8_t> model);

enum class ScanFormat { Tsv, Lines };
std::string format_scan(const ScanReport& report, ScanFormat format);

struct GraphDiff {
  std::vector<std::string> added;    // names in b
  std::vector<std::string> removed;  // names in a
  std::vector<std::pair<std::string, std::string>> modified;  // (a, b): same role, different payload
  [[nodiscard]] bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
};

/// Matches nodes forward from the input anchors: a node of `b` pairs with an
/// unmatched node of `a` that has the same op and attributes and whose
/// non-constant inputs are already paired; the Const operands of a pair are
/// paired slot by slot and reported as modified when their values differ.
/// Names are ignored.
GraphDiff diff_graphs(const Graph& a, const Graph& b);
/// Throws ModelDecodingError.
GraphDiff diff(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

/// `change\tnode_a\tnode_b` rows (added, removed, modified).
std::string format_diff(const GraphDiff& d);

}  // namespace graft
