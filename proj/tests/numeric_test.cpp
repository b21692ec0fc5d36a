#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "rltm/grad_check.hpp"
#include "rltm/ops.hpp"
#include "rltm/rng.hpp"
#include "rltm/tensor.hpp"
#include "test_util.hpp"

using namespace rltm;
using test::fill_uniform;
using test::random_vec;

static_assert(sizeof(real) == 8, "tests require the 64-bit build");

TEST_CASE("affine_tanh zero weights give zero output") {
  Tensor W = Tensor::zeros({3, 2});
  Tensor b = Tensor::zeros({3});
  std::vector<real> x = {0.7, -0.3}, h(3, 99);
  affine_tanh_forward(W, b, x, h);
  for (real v : h) CHECK(v == 0.0);
}

TEST_CASE("affine_tanh identity evaluates tanh") {
  Tensor W = Tensor::zeros({1, 1});
  W.at(0, 0) = 1;
  Tensor b = Tensor::zeros({1});
  std::vector<real> x = {0.5}, h(1);
  affine_tanh_forward(W, b, x, h);
  CHECK(h[0] == doctest::Approx(std::tanh(0.5)).epsilon(1e-12));
}

TEST_CASE("affine_tanh rejects shape mismatch") {
  Tensor W = Tensor::zeros({3, 2});
  Tensor b = Tensor::zeros({3});
  std::vector<real> x = {1, 2, 3}, h(3);
  CHECK_THROWS_AS(affine_tanh_forward(W, b, x, h), DimensionError);
}

TEST_CASE("affine_tanh backward matches finite differences") {
  for (uint64_t seed : {11u, 12u, 13u}) {
    Rng rng(seed);
    ParamTensor W("W", {4, 3}), b("b", {4}), x("x", {3});
    fill_uniform(W.value, rng);
    fill_uniform(b.value, rng);
    fill_uniform(x.value, rng);
    const auto lw = random_vec(4, rng);

    auto eval = [&](bool with_grad) {
      std::vector<real> h(4);
      affine_tanh_forward(W.value, b.value, x.value.v, h);
      double loss = 0;
      for (size_t i = 0; i < 4; ++i) loss += lw[i] * h[i];
      if (with_grad) {
        affine_tanh_backward(W.value, x.value.v, h, lw, W.grad, b.grad, x.grad.v);
      }
      return loss;
    };
    const auto result = grad_check(eval, {&W, &b, &x}, 64, seed);
    CHECK(result.max_rel_error < 1e-6);
  }
}

TEST_CASE("cosine basic values") {
  std::vector<real> ones = {1, 1};
  CHECK(cosine(ones, ones) == doctest::Approx(1.0).epsilon(1e-9));
  std::vector<real> e1 = {1, 0}, e2 = {0, 1};
  CHECK(cosine(e1, e2) == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<real> a = {3, 4}, b = {4, 3};
  CHECK(cosine(a, b) == doctest::Approx(0.96).epsilon(1e-12));  // 24/25
}

TEST_CASE("cosine zero vector returns 0 via the epsilon guard") {
  std::vector<real> zero = {0, 0, 0}, b = {1, 2, 3};
  CHECK(cosine(zero, b) == 0.0);
  CHECK(cosine(zero, zero) == 0.0);
}

TEST_CASE("cosine range and self-similarity on random vectors") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_vec(5, rng);
    const auto b = random_vec(5, rng);
    const real c = cosine(a, b);
    CHECK(c >= -1 - 1e-9);
    CHECK(c <= 1 + 1e-9);
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("cosine backward matches finite differences") {
  for (uint64_t seed : {21u, 22u, 23u}) {
    Rng rng(seed);
    ParamTensor a("a", {6}), b("b", {6});
    fill_uniform(a.value, rng);
    fill_uniform(b.value, rng);
    auto eval = [&](bool with_grad) {
      const double c = cosine(a.value.v, b.value.v);
      if (with_grad) cosine_backward(a.value.v, b.value.v, 1.0, a.grad.v, b.grad.v);
      return c;
    };
    CHECK(grad_check(eval, {&a, &b}, 12, seed).max_rel_error < 1e-6);
  }
}

TEST_CASE("softmax of equal scores is uniform") {
  std::vector<real> c = {0, 0, 0};
  const auto p = softmax(c);
  for (real x : p) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax of [ln2, 0, 0]") {
  std::vector<real> c = {std::log(2.0), 0, 0};
  const auto p = softmax(c);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance and normalization") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 1 + rng.uniform_index(9);
    auto c = random_vec(n, rng, -3, 3);
    const auto p = softmax(c);
    double sum = 0;
    for (real x : p) {
      CHECK(x > 0);
      CHECK(x < 1 + 1e-12);
      sum += x;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    auto shifted = c;
    for (real& x : shifted) x += 17.5;
    const auto ps = softmax(shifted);
    for (size_t i = 0; i < n; ++i) CHECK(std::abs(ps[i] - p[i]) < 1e-12);
  }
}

TEST_CASE("softmax rejects empty input") {
  CHECK_THROWS_AS(softmax(std::vector<real>{}), DimensionError);
}

TEST_CASE("conv2d constant case") {
  Tensor in = Tensor::zeros({3, 3});
  in.fill(1);
  Tensor k = Tensor::zeros({1, 2, 2});
  k.fill(1);
  Tensor bias = Tensor::zeros({1});
  const Tensor out = conv2d_valid_forward(in, k, bias);
  REQUIRE(out.shape == std::vector<size_t>{1, 2, 2});
  for (real v : out.v) CHECK(v == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("conv2d identity kernel shifts the input through ReLU") {
  Rng rng(5);
  Tensor in = Tensor::zeros({4, 5});
  fill_uniform(in, rng);
  Tensor k = Tensor::zeros({1, 2, 2});
  k.at(0, 0, 0) = 1;
  Tensor bias = Tensor::zeros({1});
  const Tensor out = conv2d_valid_forward(in, k, bias);
  for (size_t i = 0; i < 3; ++i) {
    for (size_t j = 0; j < 4; ++j) {
      CHECK(out.at(0, i, j) == doctest::Approx(std::max<real>(in.at(i, j), 0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv2d rejects kernel larger than input") {
  Tensor in = Tensor::zeros({2, 3});
  Tensor k = Tensor::zeros({1, 3, 3});
  Tensor bias = Tensor::zeros({1});
  CHECK_THROWS_AS(conv2d_valid_forward(in, k, bias), DimensionError);
}

TEST_CASE("conv2d backward matches finite differences") {
  for (uint64_t seed : {31u, 32u, 33u}) {
    Rng rng(seed);
    ParamTensor in("in", {5, 7}), k("k", {3, 2, 3}), bias("bias", {3});
    fill_uniform(in.value, rng);
    fill_uniform(k.value, rng);
    fill_uniform(bias.value, rng, -0.3, 0.3);
    const auto lw = random_vec(3 * 4 * 5, rng);

    auto eval = [&](bool with_grad) {
      const Tensor out = conv2d_valid_forward(in.value, k.value, bias.value);
      double loss = 0;
      for (size_t i = 0; i < out.size(); ++i) loss += lw[i] * out.v[i];
      if (with_grad) {
        Tensor dout = Tensor::zeros(out.shape);
        for (size_t i = 0; i < out.size(); ++i) dout.v[i] = lw[i];
        conv2d_valid_backward(in.value, k.value, out, dout, k.grad, bias.grad, in.grad);
      }
      return loss;
    };
    CHECK(grad_check(eval, {&in, &k, &bias}, 20, seed).max_rel_error < 1e-6);
  }
}

TEST_CASE("dynamic_max_pool quadrants") {
  Tensor maps = Tensor::zeros({1, 4, 4});
  for (size_t i = 0; i < 16; ++i) maps.v[i] = static_cast<real>(i);
  std::vector<size_t> argmax;
  const Tensor out = dynamic_max_pool_forward(maps, 2, 2, argmax);
  CHECK(out.at(0, 0, 0) == 5);
  CHECK(out.at(0, 0, 1) == 7);
  CHECK(out.at(0, 1, 0) == 13);
  CHECK(out.at(0, 1, 1) == 15);
}

TEST_CASE("dynamic_max_pool constant map stays constant") {
  Tensor maps = Tensor::zeros({2, 5, 6});
  maps.fill(3.25);
  std::vector<size_t> argmax;
  const Tensor out = dynamic_max_pool_forward(maps, 2, 3, argmax);
  for (real v : out.v) CHECK(v == 3.25);
}

TEST_CASE("dynamic_max_pool equals brute-force cell maxima") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t h = 3 + rng.uniform_index(8), w = 3 + rng.uniform_index(10);
    const size_t rows = 1 + rng.uniform_index(std::min<size_t>(h, 4));
    const size_t cols = 1 + rng.uniform_index(std::min<size_t>(w, 4));
    Tensor maps = Tensor::zeros({2, h, w});
    fill_uniform(maps, rng);
    std::vector<size_t> argmax;
    const Tensor out = dynamic_max_pool_forward(maps, rows, cols, argmax);
    for (size_t m = 0; m < 2; ++m) {
      for (size_t i = 0; i < rows; ++i) {
        for (size_t j = 0; j < cols; ++j) {
          real best = -1e30;
          for (size_t r = i * h / rows; r < (i + 1) * h / rows; ++r) {
            for (size_t c = j * w / cols; c < (j + 1) * w / cols; ++c) {
              best = std::max(best, maps.at(m, r, c));
            }
          }
          CHECK(out.at(m, i, j) == best);
        }
      }
    }
  }
}

TEST_CASE("dynamic_max_pool rejects oversized grid") {
  Tensor maps = Tensor::zeros({1, 2, 2});
  std::vector<size_t> argmax;
  CHECK_THROWS_AS(dynamic_max_pool_forward(maps, 3, 2, argmax), DimensionError);
}

TEST_CASE("dynamic_max_pool backward routes to argmax") {
  Tensor maps = Tensor::zeros({1, 2, 2});
  maps.v = {1, 4, 2, 3};
  std::vector<size_t> argmax;
  const Tensor out = dynamic_max_pool_forward(maps, 1, 1, argmax);
  CHECK(out.v[0] == 4);
  Tensor dout = Tensor::zeros({1, 1, 1});
  dout.v[0] = 2.5;
  Tensor dmaps = Tensor::zeros({1, 2, 2});
  dynamic_max_pool_backward(dout, argmax, dmaps);
  CHECK(dmaps.v[1] == 2.5);
  CHECK(dmaps.v[0] + dmaps.v[2] + dmaps.v[3] == 0);
}

TEST_CASE("gaussian kernel peak, slope point and symmetry") {
  CHECK(gaussian_kernel(0.3, 0.3, 0.1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(gaussian_kernel(0.4, 0.3, 0.1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  for (double d : {0.05, 0.21, 0.4}) {
    CHECK(gaussian_kernel(0.5 + d, 0.5, 0.2) ==
          doctest::Approx(gaussian_kernel(0.5 - d, 0.5, 0.2)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(gaussian_kernel(0, 0, 0), ConfigError);
  CHECK_THROWS_AS(gaussian_kernel(0, 0, -1), ConfigError);
}

TEST_CASE("adam zero gradient is a value no-op at any step count") {
  ParamTensor p("p", {3});
  p.value.v = {1, -2, 3};
  AdamConfig cfg;
  for (int step = 0; step < 25; ++step) adam_step(p, cfg);
  CHECK(p.step_count == 25);
  CHECK(p.value.v == std::vector<real>{1, -2, 3});
}

TEST_CASE("adam first step moves by about -lr * sign(g)") {
  ParamTensor p("p", {2});
  p.value.v = {0.5, -0.5};
  p.grad.v = {3.0, -0.01};
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  adam_step(p, cfg);
  CHECK(p.value.v[0] == doctest::Approx(0.5 - 0.1).epsilon(1e-5));
  CHECK(p.value.v[1] == doctest::Approx(-0.5 + 0.1).epsilon(1e-3));
  CHECK(p.grad.v[0] == 0.0);  // grads cleared by the step
  CHECK(p.grad.v[1] == 0.0);
}

TEST_CASE("adam runs are bit-identical given identical inputs") {
  auto run = [] {
    ParamTensor p("p", {4});
    p.value.v = {0.1, 0.2, 0.3, 0.4};
    AdamConfig cfg;
    Rng rng(42);
    for (int step = 0; step < 50; ++step) {
      for (auto& g : p.grad.v) g = static_cast<real>(rng.uniform(-1, 1));
      adam_step(p, cfg);
    }
    return p.value.v;
  };
  const auto a = run(), b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(real)) == 0);
}

TEST_CASE("adam rejects non-finite gradients") {
  ParamTensor p("p", {2});
  p.grad.v = {1.0, std::numeric_limits<real>::quiet_NaN()};
  AdamConfig cfg;
  CHECK_THROWS_AS(adam_step(p, cfg), NumericError);
}

TEST_CASE("adam config validation") {
  AdamConfig bad;
  bad.learning_rate = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = AdamConfig{};
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(AdamConfig{}.validate());
}

TEST_CASE("global norm clipping") {
  ParamTensor a("a", {2}), b("b", {1});
  a.grad.v = {3, 0};
  b.grad.v = {4};
  std::vector<ParamTensor*> params = {&a, &b};
  CHECK(global_grad_norm(params) == doctest::Approx(5.0).epsilon(1e-12));
  clip_global_grad_norm(params, 10);  // below the threshold: untouched
  CHECK(a.grad.v[0] == 3);
  clip_global_grad_norm(params, 2.5);
  CHECK(global_grad_norm(params) == doctest::Approx(2.5).epsilon(1e-9));
  CHECK(a.grad.v[0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(b.grad.v[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("grad_check on a constant closure reports zero error") {
  ParamTensor p("p", {3});
  auto eval = [](bool) { return 1.25; };
  CHECK(grad_check(eval, {&p}, 8, 1).max_rel_error == 0.0);
}

TEST_CASE("grad_check on x^2 at x=3") {
  ParamTensor x("x", {1});
  x.value.v = {3.0};
  auto eval = [&](bool with_grad) {
    const double v = x.value.v[0];
    if (with_grad) x.grad.v[0] += 2 * v;
    return v * v;
  };
  const auto result = grad_check(eval, {&x}, 4, 1);
  CHECK(result.max_rel_error < 1e-8);
}
