#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "rsnet/ops.hpp"
#include "test_util.hpp"

using namespace rsnet;
using test::finite_difference;
using test::max_rel_error;
using test::random_tensor;

namespace {

ConvParams make_conv(int f, int c, int k, int stride, std::mt19937_64& rng) {
  ConvParams p;
  p.weights = random_tensor(f, c, k, k, rng);
  p.bias.resize(f);
  std::uniform_real_distribution<float> dist(-0.5f, 0.5f);
  for (float& b : p.bias) b = dist(rng);
  p.stride = stride;
  p.padding = (k - 1) / 2;
  return p;
}

double project(const Tensor& t, const Tensor& proj) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    acc += static_cast<double>(t.raw()[i]) * proj.raw()[i];
  return acc;
}

}  // namespace

TEST_CASE("conv2d all-ones 3x3 kernel sums the receptive field") {
  Tensor x(1, 1, 3, 3);
  x.fill(1.0f);
  ConvParams p;
  p.weights = Tensor(1, 1, 3, 3);
  p.weights.fill(1.0f);
  p.bias = {0.0f};
  p.stride = 1;
  p.padding = 1;
  const Tensor y = ops::conv2d(x, p);
  CHECK(y.at(0, 0, 1, 1) == doctest::Approx(9.0));
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0));
  CHECK(y.at(0, 0, 2, 2) == doctest::Approx(4.0));
}

TEST_CASE("1x1 conv with weight 2 scales every element") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(1, 1, 4, 4, rng);
  ConvParams p;
  p.weights = Tensor(1, 1, 1, 1);
  p.weights.at(0, 0, 0, 0) = 2.0f;
  p.bias = {0.0f};
  const Tensor y = ops::conv2d(x, p);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(y.raw()[i] == doctest::Approx(2.0f * x.raw()[i]));
}

TEST_CASE("conv2d stride-2 output shape") {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor(1, 4, 6, 6, rng);
  const ConvParams p = make_conv(8, 4, 3, 2, rng);
  const Tensor y = ops::conv2d(x, p);
  CHECK(y.shape() == std::array<int, 4>{1, 8, 3, 3});
}

TEST_CASE("conv2d rejects channel mismatch naming the axis") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(1, 2, 4, 4, rng);
  const ConvParams p = make_conv(4, 3, 3, 1, rng);
  CHECK_THROWS_WITH_AS(ops::conv2d(x, p),
                       doctest::Contains("channel axis"), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences") {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor(1, 2, 5, 5, rng);
  const ConvParams p = make_conv(3, 2, 3, 1, rng);
  const Tensor y = ops::conv2d(x, p);
  const Tensor proj = random_tensor(y.n(), y.c(), y.h(), y.w(), rng);
  const ConvGrads g = ops::conv2d_backward(x, p, proj);

  // The oracle forward runs in f64 end to end so the h=1e-3 step is not
  // drowned by f32 output rounding.
  auto loss = [&](const std::vector<float>& input,
                  const std::vector<float>& weights,
                  const std::vector<float>& bias) {
    const auto out = test::conv2d_f64(input, x.shape(), weights, bias,
                                      p.filters(), p.kernel(), p.stride,
                                      p.padding);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * proj.raw()[i];
    return acc;
  };

  SUBCASE("input gradient") {
    const auto fd = finite_difference(x.raw(), [&](const std::vector<float>& v) {
      return loss(v, p.weights.raw(), p.bias);
    });
    std::vector<double> analytic(g.grad_input.raw().begin(),
                                 g.grad_input.raw().end());
    CHECK(max_rel_error(analytic, fd) < 1e-3);
  }
  SUBCASE("weight gradient") {
    const auto fd = finite_difference(
        p.weights.raw(), [&](const std::vector<float>& v) {
          return loss(x.raw(), v, p.bias);
        });
    std::vector<double> analytic(g.grad_weights.raw().begin(),
                                 g.grad_weights.raw().end());
    CHECK(max_rel_error(analytic, fd) < 1e-3);
  }
  SUBCASE("bias gradient") {
    const auto fd = finite_difference(p.bias, [&](const std::vector<float>& v) {
      return loss(x.raw(), p.weights.raw(), v);
    });
    std::vector<double> analytic(g.grad_bias.begin(), g.grad_bias.end());
    CHECK(max_rel_error(analytic, fd) < 1e-3);
  }
}

TEST_CASE("conv2d_backward zero grad_out gives zero gradients") {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor(1, 2, 4, 4, rng);
  const ConvParams p = make_conv(3, 2, 3, 1, rng);
  Tensor go(1, 3, 4, 4);
  const ConvGrads g = ops::conv2d_backward(x, p, go);
  for (float v : g.grad_input.raw()) CHECK(v == 0.0f);
  for (float v : g.grad_weights.raw()) CHECK(v == 0.0f);
  for (float v : g.grad_bias) CHECK(v == 0.0f);
}

TEST_CASE("1x1 conv backward on a single site is the scalar chain rule") {
  Tensor x(1, 1, 1, 1);
  x.at(0, 0, 0, 0) = 3.0f;
  ConvParams p;
  p.weights = Tensor(1, 1, 1, 1);
  p.weights.at(0, 0, 0, 0) = 0.5f;
  p.bias = {0.0f};
  Tensor go(1, 1, 1, 1);
  go.at(0, 0, 0, 0) = 2.0f;
  const ConvGrads g = ops::conv2d_backward(x, p, go);
  CHECK(g.grad_input.at(0, 0, 0, 0) == doctest::Approx(0.5f * 2.0f));
  CHECK(g.grad_weights.at(0, 0, 0, 0) == doctest::Approx(3.0f * 2.0f));
  CHECK(g.grad_bias[0] == doctest::Approx(2.0f));
}

TEST_CASE("parallel conv kernels match the serial reference") {
  std::mt19937_64 rng(6);
  for (int k : {1, 3}) {
    for (int stride : {1, 2}) {
      const Tensor x = random_tensor(2, 3, 6, 6, rng);
      const ConvParams p = make_conv(4, 3, k, stride, rng);
      const Tensor a = ops::conv2d(x, p);
      const Tensor b = ref::conv2d(x, p);
      REQUIRE(a.shape() == b.shape());
      for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(a.raw()[i] - b.raw()[i]) <= 1e-5f);

      const Tensor go = random_tensor(a.n(), a.c(), a.h(), a.w(), rng);
      const ConvGrads ga = ops::conv2d_backward(x, p, go);
      const ConvGrads gb = ref::conv2d_backward(x, p, go);
      for (std::size_t i = 0; i < ga.grad_input.size(); ++i)
        CHECK(std::abs(ga.grad_input.raw()[i] - gb.grad_input.raw()[i]) <=
              1e-5f);
      for (std::size_t i = 0; i < ga.grad_weights.size(); ++i)
        CHECK(std::abs(ga.grad_weights.raw()[i] - gb.grad_weights.raw()[i]) <=
              1e-5f);
      for (std::size_t i = 0; i < ga.grad_bias.size(); ++i)
        CHECK(std::abs(ga.grad_bias[i] - gb.grad_bias[i]) <= 1e-5f);
    }
  }
}

TEST_CASE("leaky_relu values and backward") {
  Tensor x(1, 1, 1, 3);
  x.at(0, 0, 0, 0) = 5.0f;
  x.at(0, 0, 0, 1) = -10.0f;
  x.at(0, 0, 0, 2) = -3.0f;
  const Tensor y = ops::leaky_relu(x, 0.1f);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(5.0f));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(-1.0f));
  const Tensor relu = ops::leaky_relu(x, 0.0f);
  CHECK(relu.at(0, 0, 0, 2) == 0.0f);

  Tensor go(1, 1, 1, 3);
  go.fill(1.0f);
  const Tensor g = ops::leaky_relu_backward(x, go, 0.1f);
  CHECK(g.at(0, 0, 0, 0) == doctest::Approx(1.0f));
  CHECK(g.at(0, 0, 0, 1) == doctest::Approx(0.1f));
}

TEST_CASE("sigmoid values, saturation and derivative") {
  CHECK(ops::sigmoid(0.0f) == doctest::Approx(0.5));
  CHECK(ops::sigmoid(500.0f) >= 1.0f - 1e-12f);
  CHECK(ops::sigmoid(500.0f) <= 1.0f);
  CHECK(ops::sigmoid(-500.0f) < 1e-12f);
  CHECK(ops::sigmoid(-500.0f) >= 0.0f);

  Tensor x(1, 1, 1, 1);
  Tensor go(1, 1, 1, 1);
  go.fill(1.0f);
  const Tensor g = ops::sigmoid_backward(x, go);
  CHECK(g.at(0, 0, 0, 0) == doctest::Approx(0.25));
}

TEST_CASE("maxpool2d window max and tie routing") {
  Tensor x(1, 1, 2, 2);
  x.at(0, 0, 0, 0) = 1.0f;
  x.at(0, 0, 0, 1) = 2.0f;
  x.at(0, 0, 1, 0) = 3.0f;
  x.at(0, 0, 1, 1) = 4.0f;
  const Tensor y = ops::maxpool2d(x);
  CHECK(y.shape() == std::array<int, 4>{1, 1, 1, 1});
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0f));

  Tensor c(1, 1, 2, 2);
  c.fill(7.0f);
  CHECK(ops::maxpool2d(c).at(0, 0, 0, 0) == doctest::Approx(7.0f));
  Tensor go(1, 1, 1, 1);
  go.fill(1.0f);
  const Tensor g = ops::maxpool2d_backward(c, go);
  CHECK(g.at(0, 0, 0, 0) == 1.0f);  // first window element takes the tie
  CHECK(g.at(0, 0, 0, 1) == 0.0f);
  CHECK(g.at(0, 0, 1, 0) == 0.0f);
  CHECK(g.at(0, 0, 1, 1) == 0.0f);
}

TEST_CASE("pooling matches the brute-force reference and routes one site") {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor(1, 3, 8, 8, rng);
  const Tensor a = ops::maxpool2d(x);
  const Tensor b = ref::maxpool2d(x);
  CHECK(a.shape() == std::array<int, 4>{1, 3, 4, 4});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.raw()[i] == b.raw()[i]);

  const Tensor go = random_tensor(1, 3, 4, 4, rng);
  const Tensor g = ops::maxpool2d_backward(x, go);
  int nonzero = 0;
  for (float v : g.raw()) nonzero += v != 0.0f ? 1 : 0;
  CHECK(nonzero == 3 * 4 * 4);  // exactly one site per window
}

TEST_CASE("global_maxpool batches pool independently") {
  Tensor x(2, 1, 2, 2);
  for (int h = 0; h < 2; ++h)
    for (int w = 0; w < 2; ++w) {
      x.at(0, 0, h, w) = 1.0f;
      x.at(1, 0, h, w) = 7.0f;
    }
  const Tensor y = ops::global_maxpool(x);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(1.0f));
  CHECK(y.at(1, 0, 0, 0) == doctest::Approx(7.0f));

  Tensor z(1, 1, 2, 2);
  z.at(0, 0, 0, 0) = 1.0f;
  z.at(0, 0, 0, 1) = 2.0f;
  z.at(0, 0, 1, 0) = 3.0f;
  z.at(0, 0, 1, 1) = 4.0f;
  CHECK(ops::global_maxpool(z).at(0, 0, 0, 0) == doctest::Approx(4.0f));
  Tensor go(1, 1, 1, 1);
  go.fill(1.0f);
  const Tensor g = ops::global_maxpool_backward(z, go);
  CHECK(g.at(0, 0, 0, 0) == 0.0f);
  CHECK(g.at(0, 0, 1, 1) == 1.0f);
}

TEST_CASE("broadcast_add_channelwise") {
  std::mt19937_64 rng(8);
  const Tensor f = random_tensor(1, 2, 2, 2, rng);

  SUBCASE("zero context is identity") {
    Tensor ctx(1, 2, 1, 1);
    const Tensor y = ops::broadcast_add_channelwise(f, ctx);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(y.raw()[i] == f.raw()[i]);
  }
  SUBCASE("constant context on zero feature") {
    Tensor zeros(1, 2, 2, 2);
    Tensor ctx(1, 2, 1, 1);
    ctx.fill(3.0f);
    const Tensor y = ops::broadcast_add_channelwise(zeros, ctx);
    for (float v : y.raw()) CHECK(v == doctest::Approx(3.0f));
  }
  SUBCASE("context gradient sums spatial grads") {
    Tensor go(1, 2, 2, 2);
    go.fill(1.0f);
    const Tensor g = ops::broadcast_add_backward_context(go);
    CHECK(g.at(0, 0, 0, 0) == doctest::Approx(4.0f));
    CHECK(g.at(0, 1, 0, 0) == doctest::Approx(4.0f));
  }
  SUBCASE("shape mismatch raises") {
    Tensor ctx(1, 3, 1, 1);
    CHECK_THROWS_AS(ops::broadcast_add_channelwise(f, ctx), ShapeError);
  }
}

TEST_CASE("ops are pure and deterministic") {
  std::mt19937_64 rng(9);
  const Tensor x = random_tensor(2, 4, 6, 6, rng);
  const Tensor copy = x;
  const ConvParams p = make_conv(5, 4, 3, 2, rng);
  const Tensor y1 = ops::conv2d(x, p);
  const Tensor y2 = ops::conv2d(x, p);
  CHECK(x.raw() == copy.raw());
  CHECK(y1.raw() == y2.raw());
  const Tensor m1 = ops::maxpool2d(x);
  const Tensor m2 = ops::maxpool2d(x);
  CHECK(m1.raw() == m2.raw());
}
