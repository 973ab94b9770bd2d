#include <doctest.h>

#include <random>

#include "graft/error.hpp"
#include "graft/kernels.hpp"
#include "oracles.hpp"

using namespace graft;
namespace k = graft::kernels;
using oracle::pick;
using oracle::random_tensor;

namespace {

constexpr int kInstances = 150;

void require_same(const Tensor& got, const oracle::Arr<float>& want) {
  REQUIRE(got.shape == want.shape);
  REQUIRE(bit_equal(got, oracle::to_tensor(want)));
}

oracle::Arr<float> arr(const Tensor& t) { return oracle::from<float>(t); }

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("conv2d matches the direct oracle") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < kInstances; ++i) {
      const std::uint32_t h = pick(rng, 1, 9), w = pick(rng, 1, 9), c = pick(rng, 1, 4);
      const std::uint32_t kk = pick(rng, 1, std::min(h, w) < 3 ? 1 : 5), co = pick(rng, 1, 4), s = pick(rng, 1, 3);
      const bool same = rng() % 2;
      const Tensor x = random_tensor(rng, {h, w, c}), wt = random_tensor(rng, {kk, kk, c, co}),
                   b = random_tensor(rng, {co});
      if (!same && (kk > h || kk > w)) continue;
      require_same(k::conv2d(x, wt, b, s, same ? Padding::Same : Padding::Valid),
                   oracle::conv2d(arr(x), arr(wt), arr(b), s, same));
    }
  }

  TEST_CASE("conv2d with even kernels puts the odd pad at the end") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < kInstances; ++i) {
      const std::uint32_t h = pick(rng, 2, 8), w = pick(rng, 2, 8), kk = 2 * pick(rng, 1, 2);
      const Tensor x = random_tensor(rng, {h, w, 2}), wt = random_tensor(rng, {kk, kk, 2, 3}),
                   b = random_tensor(rng, {3});
      const std::uint32_t s = pick(rng, 1, 2);
      require_same(k::conv2d(x, wt, b, s, Padding::Same), oracle::conv2d(arr(x), arr(wt), arr(b), s, true));
    }
  }

  TEST_CASE("dense") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < kInstances; ++i) {
      const std::uint32_t n = pick(rng, 1, 40), o = pick(rng, 1, 10);
      const Tensor x = random_tensor(rng, {n}), w = random_tensor(rng, {n, o}), b = random_tensor(rng, {o});
      require_same(k::dense(x, w, b), oracle::dense(arr(x), arr(w), arr(b)));
    }
  }

  TEST_CASE("unary activations") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < kInstances; ++i) {
      Tensor x = random_tensor(rng, {pick(rng, 1, 4), pick(rng, 1, 6)}, -8.0f, 8.0f);
      x.values[0] = (i % 3 == 0) ? -0.0f : 0.0f;
      require_same(k::relu(x), oracle::relu(arr(x)));
      require_same(k::sigmoid(x), oracle::sigmoid(arr(x)));
      require_same(k::sign(x), oracle::sign(arr(x)));
      require_same(k::softmax(x), oracle::softmax(arr(x)));
    }
  }

  TEST_CASE("softmax rows sum to one and survive large logits") {
    const Tensor y = k::softmax(Tensor({2, 3}, {1000.0f, 1000.0f, 0.0f, -5.0f, 0.0f, 5.0f}));
    CHECK(y.values[0] == doctest::Approx(0.5));
    CHECK(y.values[2] == 0.0f);
    CHECK(y.values[3] + y.values[4] + y.values[5] == doctest::Approx(1.0));
  }

  TEST_CASE("binary ops with every broadcast form") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < kInstances; ++i) {
      const Shape full{pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
      Shape other;
      switch (i % 4) {
        case 0: other = full; break;
        case 1: other = {1}; break;
        case 2: other = {full[2]}; break;
        default: other = {full[1], full[2]}; break;
      }
      const Tensor a = random_tensor(rng, full), b = random_tensor(rng, other);
      const bool flip = rng() % 2;
      const Tensor& l = flip ? b : a;
      const Tensor& r = flip ? a : b;
      require_same(k::add(l, r), oracle::binary(arr(l), arr(r), [](float x, float y) { return x + y; }));
      require_same(k::sub(l, r), oracle::binary(arr(l), arr(r), [](float x, float y) { return x - y; }));
      require_same(k::mul(l, r), oracle::binary(arr(l), arr(r), [](float x, float y) { return x * y; }));
    }
    CHECK_THROWS_AS(k::add(Tensor::zeros({2, 3}), Tensor::zeros({2})), Error);
  }

  TEST_CASE("max pooling") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < kInstances; ++i) {
      const std::uint32_t h = pick(rng, 2, 9), w = pick(rng, 2, 9), kk = pick(rng, 1, 3), s = pick(rng, 1, 3);
      const bool same = rng() % 2;
      const Tensor x = random_tensor(rng, {h, w, pick(rng, 1, 3)}, -4.0f, -1.0f);
      if (!same && (kk > h || kk > w)) continue;
      require_same(k::max_pool2d(x, kk, s, same ? Padding::Same : Padding::Valid),
                   oracle::maxpool(arr(x), kk, s, same));
    }
  }

  TEST_CASE("global max pooling") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < kInstances; ++i) {
      const Tensor x = random_tensor(rng, {pick(rng, 1, 7), pick(rng, 1, 7), pick(rng, 1, 5)});
      require_same(k::global_max_pool(x), oracle::global_max(arr(x)));
    }
  }

  TEST_CASE("concat along each axis") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < kInstances; ++i) {
      const std::uint32_t axis = pick(rng, 0, 2);
      Shape s{pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 4)};
      std::vector<Tensor> parts;
      const auto n = pick(rng, 1, 4);
      for (std::uint32_t p = 0; p < n; ++p) {
        s[axis] = pick(rng, 1, 3);
        parts.push_back(random_tensor(rng, s));
      }
      std::vector<const Tensor*> ptrs;
      std::vector<oracle::Arr<float>> as;
      for (const auto& t : parts) {
        ptrs.push_back(&t);
        as.push_back(arr(t));
      }
      std::vector<const oracle::Arr<float>*> aptrs;
      for (const auto& a : as) aptrs.push_back(&a);
      require_same(k::concat(ptrs, axis), oracle::concat(aptrs, axis));
    }
  }

  TEST_CASE("resize bilinear and nearest") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < kInstances; ++i) {
      const Tensor x = random_tensor(rng, {pick(rng, 1, 12), pick(rng, 1, 12), pick(rng, 1, 3)});
      const std::uint32_t oh = pick(rng, 1, 16), ow = pick(rng, 1, 16);
      require_same(k::resize(x, oh, ow, ResizeMode::Bilinear), oracle::resize(arr(x), oh, ow, false));
      require_same(k::resize(x, oh, ow, ResizeMode::Nearest), oracle::resize(arr(x), oh, ow, true));
    }
  }

  TEST_CASE("resize to the same size is the identity") {
    std::mt19937_64 rng(10);
    const Tensor x = random_tensor(rng, {7, 5, 3});
    CHECK(bit_equal(k::resize(x, 7, 5), x));
  }

  TEST_CASE("reshape and broadcast") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < kInstances; ++i) {
      const Tensor x = random_tensor(rng, {pick(rng, 1, 4), pick(rng, 1, 4)});
      const Tensor r = k::reshape(x, {static_cast<std::uint32_t>(x.size())});
      CHECK(r.values == x.values);
      const Shape to{pick(rng, 1, 3), x.shape[0], x.shape[1]};
      const Tensor b = k::broadcast_to(x, to);
      REQUIRE(b.shape == to);
      for (std::size_t j = 0; j < b.size(); ++j) REQUIRE(b.values[j] == x.values[j % x.size()]);
    }
    CHECK_THROWS_AS(k::reshape(Tensor::zeros({2, 3}), {5}), Error);
  }

  TEST_CASE("window arithmetic") {
    CHECK(k::window(160, 3, 2, Padding::Same).out == 80);
    CHECK(k::window(7, 3, 1, Padding::Valid).out == 5);
    CHECK(k::window(4, 2, 1, Padding::Same).pad_before == 0);
    CHECK(k::window(5, 3, 1, Padding::Same).pad_before == 1);
  }
}
