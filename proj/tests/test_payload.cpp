#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "graft/error.hpp"
#include "graft/interpreter.hpp"
#include "graft/payload.hpp"

using namespace graft;

namespace {

struct CondGraph {
  Graph g;
  ConditionalHandle h;
};

CondGraph conditional_graph(const Shape& branch) {
  GraphBuilder b;
  b.placeholder("x", {1});
  b.placeholder("a", branch);
  b.placeholder("b", branch);
  CondGraph c;
  c.h = build_conditional(b, "x", "a", "b", "if/");
  b.mark_output(c.h.y_out);
  c.g = std::move(b).finish();
  return c;
}

Tensor run_cond(const CondGraph& c, float x, const Tensor& a, const Tensor& b) {
  return execute(c.g, {{"x", Tensor::scalar(x)}, {"a", a}, {"b", b}}).at(c.h.y_out);
}

// Independent brute-force parameter count: every scalar held by a Const.
std::uint64_t const_scalars(const Graph& g) {
  std::uint64_t n = 0;
  for (const auto& node : g.nodes)
    if (node.op == OpKind::Const) n += node.value->size();
  return n;
}

// Receptive field by explicit back-projection of one output pixel through
// the conv stack, without the closed-form recurrence.
std::uint32_t projected_extent(const DetectorArch& arch, std::size_t tap) {
  std::int64_t lo = 0, hi = 0;  // inclusive span at the tap's resolution
  for (std::size_t l = arch.taps[tap] + 1; l-- > 0;) {
    const auto& s = arch.stages[l];
    const std::int64_t half = (s.kernel - 1) / 2;
    lo = lo * s.stride - half;
    hi = hi * s.stride + (s.kernel - 1 - half);
  }
  return static_cast<std::uint32_t>(hi - lo + 1);
}

}  // namespace

TEST_SUITE("payload") {
  TEST_CASE("conditional examples") {
    const auto c = conditional_graph({2});
    const Tensor a({2}, {1, 2}), b({2}, {3, 4});
    CHECK(run_cond(c, 1.0f, a, b).values == a.values);
    CHECK(run_cond(c, 0.0f, a, b).values == b.values);
    CHECK(run_cond(c, -0.0f, a, b).values == b.values);
  }

  TEST_CASE("conditional has exactly seven operators plus the constant one") {
    const auto c = conditional_graph({3});
    CHECK(c.h.node_names.size() == 7);
    std::multiset<OpKind> ops;
    for (const auto& n : c.h.node_names) ops.insert(c.g.node(n).op);
    CHECK(ops == std::multiset<OpKind>{OpKind::ReLU, OpKind::Sign, OpKind::Broadcast, OpKind::Sub, OpKind::Mul,
                                       OpKind::Mul, OpKind::Add});
    CHECK(c.g.node(c.h.one_const).op == OpKind::Const);
    CHECK(c.g.nodes.size() == 3 + 7 + 1);
  }

  TEST_CASE("conditional sweep selects bit-exactly") {
    const auto c = conditional_graph({2, 3});
    std::mt19937_64 rng(5);
    for (float x : {-10.0f, -0.5f, -1e-9f, 0.0f, 1e-9f, 0.5f, 10.0f}) {
      for (int i = 0; i < 50; ++i) {
        const Tensor a = oracle::random_tensor(rng, {2, 3}, -1e6f, 1e6f);
        const Tensor b = oracle::random_tensor(rng, {2, 3}, -1e6f, 1e6f);
        REQUIRE(bit_equal(run_cond(c, x, a, b), x > 0.0f ? a : b));
      }
    }
  }

  TEST_CASE("conditional rejects bad operands") {
    GraphBuilder b;
    b.placeholder("x", {2});
    b.placeholder("a", {2});
    b.placeholder("b", {3});
    b.placeholder("s", {1});
    CHECK_THROWS_AS(build_conditional(b, "s", "a", "b", "p/"), Error);
    CHECK_THROWS_AS(build_conditional(b, "x", "a", "a", "p/"), Error);
    const auto before = b.graph().nodes.size();
    build_conditional(b, "s", "a", "a", "p/");
    CHECK(b.graph().nodes.size() == before + 8);
    try {
      build_conditional(b, "s", "a", "a", "p/");
      FAIL("expected a collision");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NameCollision);
    }
    CHECK(b.graph().nodes.size() == before + 8);
  }

  TEST_CASE("reference detector constraints") {
    const auto ref = DetectorArch::reference();
    CHECK(param_count(ref) == 30625);
    CHECK(receptive_field(ref, 0) == 7);
    CHECK(receptive_field(ref, ref.taps.size() - 1) == 91);
    for (std::size_t t = 0; t < ref.taps.size(); ++t) CHECK(receptive_field(ref, t) == projected_extent(ref, t));

    const Graph g = build_detector(ref, 3);
    CHECK(validate(g).empty());
    CHECK(const_scalars(g) == 30625);
    const auto io = find_io(g);
    CHECK(io.input_shape == Shape{160, 160, 3});
    CHECK(io.output_shape == Shape{1});
    std::mt19937_64 rng(1);
    const float p = run_single(g, fixture::random_image(rng, 160, 160)).values[0];
    CHECK(p > 0.0f);
    CHECK(p < 1.0f);
  }

  TEST_CASE("single 3x3 conv has receptive field 3") {
    DetectorArch a;
    a.input_size = 8;
    a.stages = {{4, 3, 1}};
    a.taps = {0};
    CHECK(receptive_field(a, 0) == 3);
    CHECK(param_count(a) == 3 * 3 * 3 * 4 + 4 + 4 + 1);
  }

  TEST_CASE("parameter formula equals the brute-force count") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 30; ++i) {
      DetectorArch a;
      a.input_size = oracle::pick(rng, 8, 40);
      const auto n = oracle::pick(rng, 1, 4);
      for (std::uint32_t s = 0; s < n; ++s)
        a.stages.push_back({oracle::pick(rng, 1, 6), 2 * oracle::pick(rng, 0, 2) + 1, oracle::pick(rng, 1, 3)});
      for (std::uint32_t s = 0; s < n; ++s)
        if (s + 1 == n || rng() % 2) a.taps.push_back(s);
      const Graph g = build_detector(a, i);
      REQUIRE(validate(g).empty());
      CHECK(const_scalars(g) == param_count(a));
      for (std::size_t t = 0; t < a.taps.size(); ++t) CHECK(receptive_field(a, t) == projected_extent(a, t));
    }
  }

  TEST_CASE("desk detector builds and runs") {
    const auto desk = DetectorArch::desk();
    CHECK(desk.input_size == 64);
    const Graph g = build_detector(desk, 0);
    CHECK(validate(g).empty());
    CHECK(const_scalars(g) == param_count(desk));
    std::mt19937_64 rng(2);
    const float p = run_single(g, fixture::random_image(rng, 64, 64)).values[0];
    CHECK(std::isfinite(p));
  }

  TEST_CASE("detector init is seeded") {
    const auto desk = DetectorArch::desk();
    CHECK(structurally_equal(build_detector(desk, 4), build_detector(desk, 4)));
    CHECK_FALSE(structurally_equal(build_detector(desk, 4), build_detector(desk, 5)));
  }

  TEST_CASE("invalid architectures") {
    auto code = [](DetectorArch a) {
      try {
        check_arch(a);
      } catch (const Error& e) {
        return e.code();
      }
      return Errc::Io;
    };
    DetectorArch a = DetectorArch::desk();
    a.taps = {1, 3};
    CHECK(code(a) == Errc::InvalidArch);
    a = DetectorArch::desk();
    a.taps = {3, 1, 4};
    CHECK(code(a) == Errc::InvalidArch);
    a = DetectorArch::desk();
    a.stages[0].stride = 0;
    CHECK(code(a) == Errc::InvalidArch);
    a = DetectorArch::desk();
    a.stages.clear();
    CHECK(code(a) == Errc::InvalidArch);
  }

  TEST_CASE("arch text round trip") {
    for (const auto& a : {DetectorArch::reference(), DetectorArch::desk()}) CHECK(parse_arch(format_arch(a)) == a);
    const auto a = parse_arch("# comment\ninput_size=32\nfilters=4,8\nkernels=3,3\nstrides=1,2\ntaps=1\n");
    CHECK(a.input_size == 32);
    CHECK(a.stages.size() == 2);
    CHECK(a.stages[1] == ConvStage{8, 3, 2});
    CHECK_THROWS_AS(parse_arch("filters=4\nkernels=3,3\nstrides=1\ntaps=0\ninput_size=8\n"), Error);
    CHECK_THROWS_AS(parse_arch("colour=blue\n"), Error);
  }
}
