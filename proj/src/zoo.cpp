#include "graft/zoo.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "graft/codec.hpp"
#include "graft/error.hpp"
#include "graft/interpreter.hpp"
#include "graft/random.hpp"

namespace graft {

namespace {

struct Builder {
  GraphBuilder b;
  std::mt19937_64& rng;
  std::uint32_t counter = 0;

  std::string fresh(const std::string& stem) { return stem + std::to_string(counter++); }

  Tensor he_normal(Shape shape, std::uint64_t fan_in) {
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.values) v = dist(rng);
    return t;
  }

  Tensor small_bias(std::uint32_t n) {
    Tensor t = Tensor::zeros({n});
    for (auto& v : t.values) v = uniform(rng, -0.05f, 0.05f);
    return t;
  }

  std::uint32_t conv(std::uint32_t x, std::uint32_t cin, std::uint32_t cout, std::uint32_t k, std::uint32_t stride,
                     Padding pad) {
    const auto id = fresh("conv");
    auto w = b.constant(id + "/kernel", he_normal({k, k, cin, cout}, static_cast<std::uint64_t>(k) * k * cin));
    auto bias = b.constant(id + "/bias", small_bias(cout));
    return b.op(id, OpKind::Conv2D, {x, w, bias}, {{"stride", stride}, {"padding", static_cast<std::uint32_t>(pad)}});
  }

  std::uint32_t dense(std::uint32_t x, std::uint32_t in, std::uint32_t out) {
    const auto id = fresh("fc");
    auto w = b.constant(id + "/kernel", he_normal({in, out}, in));
    auto bias = b.constant(id + "/bias", small_bias(out));
    return b.op(id, OpKind::Dense, {x, w, bias});
  }
};

Graph build_victim(std::mt19937_64& rng, bool large) {
  Builder m{GraphBuilder{}, rng};
  std::uint32_t h, w;
  if (large) {
    h = w = 112 + 16 * uniform_index(rng, 2);
  } else {
    h = 16 + 8 * uniform_index(rng, 5);
    w = uniform_index(rng, 3) == 0 ? 16 + 8 * uniform_index(rng, 5) : h;
  }
  auto x = m.b.placeholder("input", {h, w, 3});
  std::uint32_t c = 3;

  const std::uint32_t blocks = large ? 2 + uniform_index(rng, 2) : 1 + uniform_index(rng, 4);
  for (std::uint32_t i = 0; i < blocks; ++i) {
    const std::uint32_t cout = large ? 24 + 4 * uniform_index(rng, 3) : 4 + 4 * uniform_index(rng, 4);
    // Large victims keep full resolution through their second block.
    const std::uint32_t k = large ? (i < 2 ? 3 : 1 + 2 * uniform_index(rng, 2))
                                  : std::array<std::uint32_t, 3>{1, 3, 5}[uniform_index(rng, 3)];
    const bool shrink = i > (large ? 1u : 0u) && h >= 8 && w >= 8;
    const std::uint32_t stride = shrink && (large || uniform_index(rng, 2) == 0) ? 2 : 1;
    const Padding pad = (h > k + 2 && w > k + 2 && uniform_index(rng, 3) == 0) ? Padding::Valid : Padding::Same;
    x = m.conv(x, c, cout, k, stride, pad);
    x = m.b.op(m.fresh("relu"), OpKind::ReLU, {x});
    c = cout;
    const auto shapes = infer_shapes(m.b.graph());
    h = shapes.at(m.b.graph().nodes[x].name)[0];
    w = shapes.at(m.b.graph().nodes[x].name)[1];

    if (!(large && i < 2) && uniform_index(rng, 3) == 0) {
      auto y = m.conv(x, c, c, 3, 1, Padding::Same);
      y = m.b.op(m.fresh("relu"), OpKind::ReLU, {y});
      x = m.b.op(m.fresh("residual"), OpKind::Add, {x, y});
    }
    if (!(large && i == 0) && h >= 4 && w >= 4 && uniform_index(rng, 2) == 0) {
      x = m.b.op(m.fresh("pool"), OpKind::MaxPool2D, {x}, {{"kernel", 2u}, {"stride", 2u}});
      h /= 2;
      w /= 2;
    }
  }

  std::uint32_t features;
  if (static_cast<std::uint64_t>(h) * w * c <= 2048 && uniform_index(rng, 2) == 0) {
    features = h * w * c;
    x = m.b.op(m.fresh("flatten"), OpKind::Reshape, {x}, {{"shape", Shape{features}}});
  } else {
    x = m.b.op(m.fresh("gmp"), OpKind::GlobalMaxPool, {x});
    x = m.b.op(m.fresh("flatten"), OpKind::Reshape, {x}, {{"shape", Shape{c}}});
    features = c;
  }
  const std::uint32_t classes = 2 + uniform_index(rng, 9);
  if (uniform_index(rng, 3) == 0) {
    const std::uint32_t hidden = 8 + 8 * uniform_index(rng, 3);
    x = m.dense(x, features, hidden);
    x = m.b.op(m.fresh("relu"), OpKind::ReLU, {x});
    features = hidden;
  }
  x = m.dense(x, features, classes);
  m.b.op("probs", OpKind::Softmax, {x});
  m.b.mark_output("probs");
  return std::move(m.b).finish();
}

}  // namespace

Graph random_victim(std::uint64_t seed, std::uint64_t index) {
  auto rng = stream_rng(seed, index);
  Graph g = build_victim(rng, index % 10 == 9);
  require_valid(g);
  return g;
}

std::vector<Graph> make_zoo(std::size_t count, std::uint64_t seed) {
  if (count < 1) throw Error(Errc::InvalidConfig, "zoo count must be at least 1");
  std::vector<Graph> zoo;
  zoo.reserve(count);
  for (std::size_t i = 0; i < count; ++i) zoo.push_back(random_victim(seed, i));
  return zoo;
}

void write_zoo(const std::filesystem::path& dir, const std::vector<Graph>& zoo) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "zoo.tsv", std::ios::trunc);
  if (!index) throw Error(Errc::Io, "cannot write " + (dir / "zoo.tsv").string());
  index << "file\tnodes\tops\tinput\tclasses\n";
  for (std::size_t i = 0; i < zoo.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "model_%03zu.nnir", i);
    save_model(dir / name, zoo[i]);
    const auto io = find_io(zoo[i]);
    index << name << '\t' << zoo[i].nodes.size() << '\t' << count_ops(zoo[i]) << '\t' << shape_str(io.input_shape)
          << '\t' << num_elements(io.output_shape) << '\n';
  }
}

}  // namespace graft
