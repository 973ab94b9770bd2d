#pragma once

// Shared graph and data builders for the test suites.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "graft/augment.hpp"
#include "graft/graph.hpp"
#include "graft/interpreter.hpp"
#include "graft/payload.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace graft;

// conv(3x3) -> relu -> global max -> reshape -> dense -> softmax, named like a
// hand-written classifier.
inline Graph toy_classifier(std::uint32_t size, std::uint32_t classes, std::uint64_t seed, std::uint32_t filters = 4) {
  std::mt19937_64 rng(seed);
  GraphBuilder b;
  auto x = b.placeholder("input", {size, size, 3});
  auto w = b.constant("conv/w", oracle::random_tensor(rng, {3, 3, 3, filters}, -0.5f, 0.5f));
  auto bias = b.constant("conv/b", oracle::random_tensor(rng, {filters}, -0.1f, 0.1f));
  auto conv = b.op("conv", OpKind::Conv2D, {x, w, bias}, {{"stride", 1u}, {"padding", 1u}});
  auto relu = b.op("conv/relu", OpKind::ReLU, {conv});
  auto pool = b.op("pool", OpKind::GlobalMaxPool, {relu});
  auto flat = b.op("flat", OpKind::Reshape, {pool}, {{"shape", Shape{filters}}});
  auto dw = b.constant("fc/w", oracle::random_tensor(rng, {filters, classes}, -2.0f, 2.0f));
  auto db = b.constant("fc/b", oracle::random_tensor(rng, {classes}, -0.5f, 0.5f));
  auto fc = b.op("fc", OpKind::Dense, {flat, dw, db});
  b.op("probs", OpKind::Softmax, {fc});
  b.mark_output("probs");
  return std::move(b).finish();
}

inline Tensor random_image(std::mt19937_64& rng, std::uint32_t h, std::uint32_t w) {
  return oracle::random_tensor(rng, {h, w, 3}, 0.0f, 1.0f);
}

// Random valid graph over every op kind, for codec round trips. Shapes are
// kept tiny; Const payloads include signed zeros and extreme magnitudes.
inline Graph random_graph(std::mt19937_64& rng) {
  GraphBuilder b;
  const std::uint32_t h = oracle::pick(rng, 1, 5), w = oracle::pick(rng, 1, 5), c = oracle::pick(rng, 1, 3);
  const Shape img{h, w, c};
  struct Item {
    std::uint32_t id;
    Shape shape;
  };
  std::vector<Item> pool{{b.placeholder("p0", img), img}};
  int serial = 0;
  auto name = [&] { return "n" + std::to_string(serial++) + "_" + std::to_string(rng() % 1000); };
  auto konst = [&](Shape s) {
    Tensor t = oracle::random_tensor(rng, s, -3.0f, 3.0f);
    for (auto& e : t.values) {
      const auto r = rng() % 16;
      if (r == 0) e = -0.0f;
      if (r == 1) e = 3.0e38f;
      if (r == 2) e = 1.0e-40f;
    }
    return b.constant(name(), std::move(t));
  };
  auto pick_img = [&]() -> Item {
    std::vector<Item> imgs;
    for (const auto& it : pool)
      if (it.shape.size() == 3) imgs.push_back(it);
    return imgs[rng() % imgs.size()];
  };

  const int steps = static_cast<int>(oracle::pick(rng, 1, 12));
  for (int s = 0; s < steps; ++s) {
    const Item a = pool[rng() % pool.size()];
    switch (rng() % 11) {
      case 0: {
        const Item x = pick_img();
        const std::uint32_t k = oracle::pick(rng, 1, 3), co = oracle::pick(rng, 1, 3), st = oracle::pick(rng, 1, 2);
        auto wt = konst({k, k, x.shape[2], co});
        auto bs = konst({co});
        auto id = b.op(name(), OpKind::Conv2D, {x.id, wt, bs}, {{"stride", st}, {"padding", 1u}});
        pool.push_back({id, {(x.shape[0] + st - 1) / st, (x.shape[1] + st - 1) / st, co}});
        break;
      }
      case 1: {
        const auto n = static_cast<std::uint32_t>(num_elements(a.shape)), o = oracle::pick(rng, 1, 4);
        auto id = b.op(name(), OpKind::Dense, {a.id, konst({n, o}), konst({o})});
        pool.push_back({id, {o}});
        break;
      }
      case 2: {
        static constexpr OpKind unary[] = {OpKind::ReLU, OpKind::Sigmoid, OpKind::Softmax, OpKind::Sign};
        pool.push_back({b.op(name(), unary[rng() % 4], {a.id}), a.shape});
        break;
      }
      case 3: {
        static constexpr OpKind bin[] = {OpKind::Add, OpKind::Sub, OpKind::Mul};
        const bool scalar = rng() % 2;
        auto k = konst(scalar ? Shape{1} : a.shape);
        const bool flip = rng() % 2;
        auto id = b.op(name(), bin[rng() % 3], flip ? std::vector<std::uint32_t>{k, a.id} : std::vector{a.id, k});
        pool.push_back({id, a.shape});
        break;
      }
      case 4: {
        const auto n = static_cast<std::uint32_t>(num_elements(a.shape));
        pool.push_back({b.op(name(), OpKind::Reshape, {a.id}, {{"shape", Shape{n}}}), {n}});
        break;
      }
      case 5: {
        auto k = konst({1});
        pool.push_back({b.op(name(), OpKind::Broadcast, {k, a.id}), a.shape});
        break;
      }
      case 6: {
        const Item x = pick_img();
        auto id = b.op(name(), OpKind::Concat, {x.id, x.id}, {{"axis", 2u}});
        pool.push_back({id, {x.shape[0], x.shape[1], x.shape[2] * 2}});
        break;
      }
      case 7: {
        const Item x = pick_img();
        auto id = b.op(name(), OpKind::MaxPool2D, {x.id}, {{"kernel", 2u}, {"stride", 2u}, {"padding", 1u}});
        pool.push_back({id, {(x.shape[0] + 1) / 2, (x.shape[1] + 1) / 2, x.shape[2]}});
        break;
      }
      case 8: {
        const Item x = pick_img();
        pool.push_back({b.op(name(), OpKind::GlobalMaxPool, {x.id}), {1, 1, x.shape[2]}});
        break;
      }
      case 9: {
        const Item x = pick_img();
        const std::uint32_t oh = oracle::pick(rng, 1, 6), ow = oracle::pick(rng, 1, 6);
        auto id = b.op(name(), OpKind::Resize, {x.id}, {{"shape", Shape{oh, ow}}, {"mode", std::uint32_t(rng() % 2)}});
        pool.push_back({id, {oh, ow, x.shape[2]}});
        break;
      }
      default: {
        // Float attribute on an op that ignores it exercises attr tag 1.
        auto id = b.op(name(), OpKind::ReLU, {a.id}, {{"note", 0.25f * float(rng() % 9)}});
        pool.push_back({id, a.shape});
        break;
      }
    }
  }
  // Every sink becomes an output so the graph has no dangling nodes.
  const Graph& g = b.graph();
  const auto cons = consumers(g);
  std::vector<std::string> outs;
  for (std::uint32_t i = 0; i < g.nodes.size(); ++i)
    if (cons[i].empty() && g.nodes[i].op != OpKind::Const) outs.push_back(g.nodes[i].name);
  b.set_outputs(outs);
  return std::move(b).finish();
}

// Detector whose head bias is shifted so about `fraction` of `images` score
// above `threshold`.
inline Graph calibrated_detector(const DetectorArch& arch, std::uint64_t seed, const std::vector<Tensor>& images,
                                 double fraction, float threshold = 0.5f) {
  Graph det = build_detector(arch, seed);
  std::vector<float> logits;
  for (const auto& img : images) {
    const auto trace = execute_trace(det, {{kDetectorInput, img}});
    logits.push_back(trace.values.at(kDetectorLogit).values[0]);
  }
  std::sort(logits.begin(), logits.end());
  const auto k = std::min<std::size_t>(logits.size() - 1,
                                       static_cast<std::size_t>((1.0 - fraction) * static_cast<double>(logits.size())));
  // Midway between neighbours so no image sits on the threshold.
  const float cut = k == 0 ? logits[0] - 1.0f : 0.5f * (logits[k - 1] + logits[k]);
  const float t_logit = std::log(threshold / (1.0f - threshold));
  auto& bias = *det.nodes[*det.find("head/bias")].value;
  bias.values[0] += t_logit - cut;
  return det;
}

// Every node gets a random opaque name; returns the old -> new mapping.
inline Graph scramble_names(const Graph& g, std::uint64_t seed, std::map<std::string, std::string>* mapping = nullptr) {
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> perm(g.nodes.size());
  for (std::uint32_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Graph out = g;
  for (std::uint32_t i = 0; i < perm.size(); ++i) {
    const std::string from = g.nodes[i].name;
    const std::string to = "n" + std::to_string(perm[i]) + "_" + std::to_string(rng() % 1000);
    out = rename_node(out, from, to);
    if (mapping) (*mapping)[from] = to;
  }
  return out;
}

}  // namespace fixture
