#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "graft/codec.hpp"
#include "graft/injector.hpp"
#include "graft/scanner.hpp"
#include "graft/zoo.hpp"

using namespace graft;

namespace {

PayloadSpec desk_spec() {
  PayloadSpec s;
  s.detector = build_detector(DetectorArch::desk(), 1);
  s.target_class = 0;
  return s;
}

std::vector<std::pair<Evidence, Severity>> signature(const ScanReport& r) {
  std::vector<std::pair<Evidence, Severity>> s;
  for (const auto& f : r.findings) s.emplace_back(f.kind, f.severity);
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

TEST_SUITE("scanner") {
  TEST_CASE("clean models have no findings") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const auto r = scan_graph(fixture::toy_classifier(16, 3, seed));
      CHECK(r.findings.empty());
      CHECK(r.verdict == Verdict::Clean);
    }
    CHECK(scan_graph(build_detector(DetectorArch::desk(), 0)).findings.empty());
  }

  TEST_CASE("clean zoo has nothing at suspicious or above") {
    for (const auto& v : make_zoo(20, 5)) {
      const auto r = scan_graph(v);
      CHECK(r.count(Severity::Suspicious) == 0);
      CHECK(r.verdict == Verdict::Clean);
    }
  }

  TEST_CASE("an injected model yields one mask pair covering the conditional") {
    const Graph victim = fixture::toy_classifier(16, 3, 2);
    InjectionReport rep;
    const Graph g = inject_graph(victim, desk_spec(), &rep);
    const auto r = scan_graph(g);
    CHECK(r.verdict == Verdict::Suspicious);
    REQUIRE(r.count(Severity::High) == 1);
    const auto it = std::find_if(r.findings.begin(), r.findings.end(),
                                 [](const Finding& f) { return f.kind == Evidence::MaskPairPattern; });
    REQUIRE(it != r.findings.end());
    CHECK(it->severity == Severity::High);
    std::vector<std::string> cond;
    for (const auto& n : rep.added_nodes)
      if (n.rfind(rep.prefix + "cond/", 0) == 0 && g.node(n).op != OpKind::Const) cond.push_back(n);
    // The conditional output carries the victim's output name.
    cond.push_back(rep.output_name);
    std::sort(cond.begin(), cond.end());
    cond.erase(std::unique(cond.begin(), cond.end()), cond.end());
    CHECK(it->nodes == cond);
    CHECK(it->nodes.size() == 7);
    // The masked Sign does not get its own finding.
    for (const auto& f : r.findings) CHECK(f.kind != Evidence::SignOp);
  }

  TEST_CASE("verdicts ignore node names") {
    const auto zoo = make_zoo(6, 9);
    for (std::size_t i = 0; i < zoo.size(); ++i) {
      const Graph g = inject_graph(zoo[i], desk_spec());
      std::map<std::string, std::string> names;
      const Graph s = fixture::scramble_names(g, i, &names);
      const auto a = scan_graph(g), b = scan_graph(s);
      CHECK(a.verdict == b.verdict);
      CHECK(signature(a) == signature(b));
      for (std::size_t k = 0; k < a.findings.size(); ++k) {
        if (a.findings[k].kind != Evidence::MaskPairPattern) continue;
        std::vector<std::string> mapped;
        for (const auto& n : a.findings[k].nodes) mapped.push_back(names.at(n));
        std::sort(mapped.begin(), mapped.end());
        CHECK(std::any_of(b.findings.begin(), b.findings.end(), [&](const Finding& f) { return f.nodes == mapped; }));
      }
      CHECK(scan_graph(fixture::scramble_names(zoo[i], i)).findings.size() == scan_graph(zoo[i]).findings.size());
    }
  }

  TEST_CASE("a lone Sign is suspicious but not high") {
    GraphBuilder b;
    auto x = b.placeholder("x", {8, 8, 3});
    auto s = b.op("s", OpKind::Sign, {x});
    auto g = b.op("g", OpKind::GlobalMaxPool, {s});
    b.op("y", OpKind::Reshape, {g}, {{"shape", Shape{3}}});
    b.mark_output("y");
    const auto r = scan_graph(std::move(b).finish());
    CHECK(r.verdict == Verdict::Suspicious);
    CHECK(r.count(Severity::High) == 0);
    REQUIRE(r.findings.size() == 1);
    CHECK(r.findings[0].kind == Evidence::SignOp);
    CHECK(r.findings[0].nodes == std::vector<std::string>{"s"});
  }

  TEST_CASE("a constant-fed selector on a parallel path is a bypass") {
    // y = relu(x) + c * sigmoid(x): two disjoint paths, one multiplied by a full-size constant.
    GraphBuilder b;
    auto x = b.placeholder("x", {4});
    auto r = b.op("r", OpKind::ReLU, {x});
    auto s = b.op("s", OpKind::Sigmoid, {x});
    auto c = b.constant("c", Tensor::filled({4}, 0.0f));
    auto m = b.op("m", OpKind::Mul, {s, c});
    b.op("y", OpKind::Add, {r, m});
    b.mark_output("y");
    const auto rep = scan_graph(std::move(b).finish());
    bool bypass = false, selector = false;
    for (const auto& f : rep.findings) {
      bypass |= f.kind == Evidence::ParallelBypass && f.severity == Severity::Suspicious;
      selector |= f.kind == Evidence::ConstFedSelector && f.severity == Severity::Info;
    }
    CHECK(bypass);
    CHECK(selector);
  }

  TEST_CASE("report formats") {
    const Graph g = inject_graph(fixture::toy_classifier(16, 3, 2), desk_spec());
    const auto r = scan(encode(g));
    const std::string tsv = format_scan(r, ScanFormat::Tsv);
    CHECK(tsv.rfind("kind\tseverity\tnodes\tdetail\n", 0) == 0);
    CHECK(tsv.find("\nverdict\tsuspicious\t\t\n") != std::string::npos);
    std::istringstream rows(tsv);
    std::string line;
    std::size_t n = 0;
    while (std::getline(rows, line)) {
      CHECK(std::count(line.begin(), line.end(), '\t') == 3);
      ++n;
    }
    CHECK(n == r.findings.size() + 2);
    const std::string lines = format_scan(r, ScanFormat::Lines);
    CHECK(lines.find("[high] MaskPairPattern") != std::string::npos);
    CHECK(lines.find("verdict: suspicious\n") != std::string::npos);
    CHECK(format_scan(scan_graph(fixture::toy_classifier(8, 2, 1)), ScanFormat::Lines) == "verdict: clean\n");
  }

  TEST_CASE("diff") {
    const Graph victim = fixture::toy_classifier(16, 3, 2);
    CHECK(diff_graphs(victim, victim).empty());
    CHECK(diff_graphs(victim, fixture::scramble_names(victim, 4)).empty());

    InjectionReport rep;
    const Graph g = inject_graph(victim, desk_spec(), &rep);
    const auto d = diff(encode(victim), encode(g));
    CHECK(d.removed.empty());
    CHECK(d.modified.empty());
    CHECK(d.added == rep.added_nodes);

    Graph tweaked = victim;
    tweaked.nodes[*tweaked.find("fc/w")].value->values[0] += 1.0f;
    const auto t = diff_graphs(victim, tweaked);
    CHECK(t.added.empty());
    REQUIRE(t.modified.size() == 1);
    CHECK(t.modified[0] == std::pair<std::string, std::string>{"fc/w", "fc/w"});

    const Graph other = build_detector(DetectorArch::desk(), 0);
    const auto u = diff_graphs(victim, other);
    CHECK(u.added.size() == other.nodes.size());
    CHECK(u.removed.size() == victim.nodes.size());
    CHECK(format_diff(u).rfind("change\tnode_a\tnode_b\n", 0) == 0);
  }
}
