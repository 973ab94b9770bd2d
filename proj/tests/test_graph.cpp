#include <doctest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "graft/codec.hpp"
#include "graft/error.hpp"
#include "graft/graph.hpp"

using namespace graft;

namespace {

bool has_rule(const Graph& g, Rule r) {
  const auto v = validate(g);
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.rule == r; });
}

Errc decode_error(const Bytes& bytes) {
  try {
    decode(bytes);
  } catch (const ModelDecodingError& e) {
    return e.code();
  }
  FAIL("decode accepted a corrupt stream");
  return Errc::Io;
}

Graph small_graph() {
  GraphBuilder b;
  auto x = b.placeholder("x", {2});
  auto k = b.constant("k", Tensor({2}, {1.0f, -2.0f}));
  b.op("y", OpKind::Add, {x, k});
  b.mark_output("y");
  return std::move(b).finish();
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("op names round trip and arities match the op table") {
    for (std::uint16_t i = 0; i < kOpKindCount; ++i) {
      const auto op = static_cast<OpKind>(i);
      CHECK(op_from_name(op_name(op)) == op);
    }
    CHECK(op_arity(OpKind::Conv2D) == 3);
    CHECK(op_arity(OpKind::Dense) == 3);
    CHECK(op_arity(OpKind::Broadcast) == 2);
    CHECK(op_arity(OpKind::Concat) == -1);
    CHECK(op_arity(OpKind::Const) == 0);
  }

  TEST_CASE("builder rejects a duplicate name") {
    GraphBuilder b;
    b.placeholder("x", {1});
    CHECK_THROWS_AS(b.placeholder("x", {1}), Error);
  }

  TEST_CASE("validation rules") {
    SUBCASE("clean graph") { CHECK(validate(small_graph()).empty()); }
    SUBCASE("cycle") {
      Graph g = small_graph();
      Node loop{"loop", OpKind::ReLU, {{3, 0}}, {}, std::nullopt};
      g.nodes.push_back(loop);
      g.nodes[3].inputs[0].node = 3;
      CHECK(has_rule(g, Rule::CycleDetected));
    }
    SUBCASE("arity") {
      Graph g = small_graph();
      g.nodes[2].inputs.pop_back();
      CHECK(has_rule(g, Rule::ArityMismatch));
    }
    SUBCASE("dangling edge") {
      Graph g = small_graph();
      g.nodes[2].inputs[1].node = 99;
      CHECK(has_rule(g, Rule::DanglingEdge));
    }
    SUBCASE("const without value") {
      Graph g = small_graph();
      g.nodes[1].value.reset();
      CHECK(has_rule(g, Rule::MissingConstValue));
    }
    SUBCASE("value on a non-const") {
      Graph g = small_graph();
      g.nodes[2].value = Tensor::scalar(1.0f);
      CHECK(has_rule(g, Rule::UnexpectedConstValue));
    }
    SUBCASE("unknown and duplicate outputs") {
      Graph g = small_graph();
      g.outputs = {"y", "y", "nope"};
      CHECK(has_rule(g, Rule::DuplicateOutput));
      CHECK(has_rule(g, Rule::UnknownOutput));
    }
    SUBCASE("unconsumed node") {
      GraphBuilder b(small_graph());
      b.op("stray", OpKind::ReLU, {b.index("x")});
      CHECK(has_rule(b.graph(), Rule::DanglingNode));
    }
    SUBCASE("reshape without shape attr") {
      GraphBuilder b;
      auto x = b.placeholder("x", {4});
      b.op("r", OpKind::Reshape, {x});
      b.mark_output("r");
      CHECK(has_rule(b.graph(), Rule::MissingAttr));
    }
    SUBCASE("empty and duplicate names") {
      Graph g = small_graph();
      g.nodes[1].name = "x";
      CHECK(has_rule(g, Rule::DuplicateName));
      g.nodes[1].name = "";
      CHECK(has_rule(g, Rule::EmptyName));
    }
  }

  TEST_CASE("canonical order is topological and breaks ties by name") {
    GraphBuilder b;
    auto z = b.placeholder("z", {1});
    auto a = b.constant("a", Tensor::scalar(1.0f));
    auto m = b.op("m", OpKind::Add, {z, a});
    b.mark_output("m");
    const Graph g = std::move(b).finish();
    const auto order = canonical_order(g);
    std::vector<std::string> names;
    for (auto i : order) names.push_back(g.nodes[i].name);
    CHECK(names == std::vector<std::string>{"a", "z", "m"});
    (void)m;
  }

  TEST_CASE("shape inference and io signature") {
    const Graph g = fixture::toy_classifier(12, 10, 1);
    const auto io = find_io(g);
    CHECK(io.input_node == "input");
    CHECK(io.input_shape == Shape{12, 12, 3});
    CHECK(io.output_node == "probs");
    CHECK(io.output_shape == Shape{10});
    CHECK(infer_shapes(g, {20, 20, 3}).at("probs") == Shape{10});
  }

  TEST_CASE("rename keeps structure") {
    const Graph g = small_graph();
    const Graph r = rename_node(g, "y", "out");
    CHECK(r.outputs == std::vector<std::string>{"out"});
    CHECK_FALSE(structurally_equal(g, r));
    CHECK(structurally_equal(g, rename_node(r, "out", "y")));
  }
}

TEST_SUITE("codec") {
  TEST_CASE("random graphs round trip and re-encode to the same bytes") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 1000; ++i) {
      const Graph g = fixture::random_graph(rng);
      REQUIRE(validate(g).empty());
      const Bytes bytes = encode(g);
      const Graph back = decode(bytes);
      REQUIRE(structurally_equal(g, back));
      REQUIRE(encode(back) == bytes);
    }
  }

  TEST_CASE("node-list permutations encode identically") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
      const Graph g = fixture::random_graph(rng);
      // Shuffle the node list and remap edges.
      std::vector<std::uint32_t> perm(g.nodes.size());
      for (std::uint32_t k = 0; k < perm.size(); ++k) perm[k] = k;
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<std::uint32_t> where(perm.size());
      for (std::uint32_t k = 0; k < perm.size(); ++k) where[perm[k]] = k;
      Graph p;
      p.outputs = g.outputs;
      for (auto old : perm) {
        Node n = g.nodes[old];
        for (auto& e : n.inputs) e.node = where[e.node];
        p.nodes.push_back(std::move(n));
      }
      REQUIRE(encode(p) == encode(g));
    }
  }

  TEST_CASE("signed zero and extreme constants survive") {
    GraphBuilder b;
    auto x = b.placeholder("x", {3});
    auto k = b.constant("k", Tensor({3}, {-0.0f, 3.4e38f, 1.0e-45f}));
    b.op("y", OpKind::Mul, {x, k});
    b.mark_output("y");
    const Graph g = std::move(b).finish();
    const Graph back = decode(encode(g));
    CHECK(bit_equal(*back.node("k").value, *g.node("k").value));
  }

  TEST_CASE("corrupt streams map to distinct errors") {
    const Bytes good = encode(small_graph());
    Bytes bad = good;
    bad[0] = 'X';
    CHECK(decode_error(bad) == Errc::BadMagic);

    bad = good;
    bad[4] = 9;
    CHECK(decode_error(bad) == Errc::UnsupportedVersion);

    bad.assign(good.begin(), good.begin() + static_cast<long>(good.size() / 2));
    CHECK(decode_error(bad) == Errc::TruncatedStream);

    bad = good;
    bad.push_back(0);
    CHECK(decode_error(bad) == Errc::MalformedRecord);

    CHECK(decode_error({}) == Errc::BadMagic);
  }

  TEST_CASE("unknown opcode and dangling edge") {
    // Layout after the header: name_len u16, name, opcode u16 ... for the first node.
    const Bytes good = encode(small_graph());
    const std::size_t first = 4 + 2 + 4;
    const std::size_t name_len = good[first] | (good[first + 1] << 8);
    Bytes bad = good;
    bad[first + 2 + name_len] = 200;
    CHECK(decode_error(bad) == Errc::UnknownOpcode);

    // y's record starts name_len=1, "y", opcode Add, input_count 2; its first
    // edge index follows.
    const std::uint8_t head[] = {1, 0, 'y', 8, 0, 2};
    auto at = std::search(good.begin(), good.end(), std::begin(head), std::end(head));
    REQUIRE(at != good.end());
    bad = good;
    bad[static_cast<std::size_t>(at - good.begin()) + sizeof head] = 0x7F;
    CHECK(decode_error(bad) == Errc::DanglingEdge);
  }

  TEST_CASE("tensor blobs round trip") {
    const Tensor t({2, 3}, {1, 2, 3, 4, 5, -0.0f});
    CHECK(bit_equal(decode_tensor(encode_tensor(t)), t));
    const Tensor q = Tensor::integer(DType::I8, {2}, {-3, 4});
    const Tensor back = decode_tensor(encode_tensor(q));
    CHECK(back.dtype == DType::I8);
    CHECK(back.ints == q.ints);
  }
}
