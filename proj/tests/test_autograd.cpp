#include <doctest.h>

#include <cmath>
#include <random>

#include "imbgan/ops.hpp"
#include "oracles.hpp"

using namespace imbgan;
namespace O = imbgan::ops;

namespace {

std::mt19937_64 rng_for(unsigned s) { return std::mt19937_64(s); }

void check_unary(const std::function<Var(const Var&)>& op, const Shape& shape,
                 double lo, double hi, unsigned seed = 1) {
  auto rng = rng_for(seed);
  Var x(oracle::random_tensor(shape, rng, lo, hi), true);
  const Tensor w = oracle::random_tensor(op(x).shape(), rng);
  auto loss = [&] { return O::sum(O::mul_const(op(x), w)); };
  CHECK(oracle::finite_difference_check(loss, {x}).max_rel_error < 1e-6);
}

void check_binary(const std::function<Var(const Var&, const Var&)>& op,
                  const Shape& sa, const Shape& sb, double lo = -1,
                  double hi = 1) {
  auto rng = rng_for(7);
  Var a(oracle::random_tensor(sa, rng), true);
  Var b(oracle::random_tensor(sb, rng, lo, hi), true);
  const Tensor w = oracle::random_tensor(op(a, b).shape(), rng);
  auto loss = [&] { return O::sum(O::mul_const(op(a, b), w)); };
  CHECK(oracle::finite_difference_check(loss, {a, b}).max_rel_error < 1e-6);
}

// Plain loops, no im2col.
Tensor naive_conv(const Tensor& x, const Tensor& w, std::size_t stride,
                  std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), k = w.dim(2);
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - k) / stride + 1;
  Tensor y({N, O, Ho, Wo});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long s = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (r < 0 || s < 0 || r >= static_cast<long>(H) || s >= static_cast<long>(W)) continue;
                acc += x[((n * C + c) * H + r) * W + s] * w[((o * C + c) * k + u) * k + v];
              }
          y[((n * O + o) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  check_binary(O::add, {2, 3}, {2, 3});
  check_binary(O::sub, {2, 3}, {2, 3});
  check_binary(O::mul, {2, 3}, {2, 3});
  check_binary(O::div, {2, 3}, {2, 3}, 0.5, 2.0);
  check_unary(O::neg, {4}, -1, 1);
  check_unary([](const Var& x) { return O::scale(x, -2.5); }, {4}, -1, 1);
  check_unary([](const Var& x) { return O::add_scalar(x, 3.0); }, {4}, -1, 1);
  check_unary(O::exp, {5}, -2, 2);
  check_unary(O::log, {5}, 0.1, 3);
  check_unary(O::sqrt, {5}, 0.1, 3);
  check_unary(O::sigmoid, {5}, -4, 4);
  check_unary([](const Var& x) { return O::leaky_relu(x, 0.2); }, {9}, -1, 1);
  check_unary([](const Var& x) { return O::clamp_min(x, 0.1); }, {9}, -1, 1);
}

TEST_CASE("reductions and shape ops match finite differences") {
  check_unary(O::sum, {3, 4}, -1, 1);
  check_unary(O::mean, {3, 4}, -1, 1);
  check_unary([](const Var& x) { return O::expand(x, {2, 3}); }, {1}, -1, 1);
  check_unary([](const Var& x) { return O::reshape(x, {6, 2}); }, {3, 4}, -1, 1);
  check_unary(O::flatten, {2, 3, 2}, -1, 1);
  check_unary(O::transpose, {3, 4}, -1, 1);
  check_unary(O::row_sum, {3, 4}, -1, 1);
  check_unary([](const Var& x) { return O::expand_cols(x, 5); }, {3}, -1, 1);
  check_unary([](const Var& x) { return O::broadcast_axis1(x, {2, 3, 2, 2}); }, {3}, -1, 1);
  check_unary(O::sum_to_axis1, {2, 3, 2}, -1, 1);
  check_unary(O::log_softmax, {3, 5}, -3, 3);
  check_unary(O::softmax, {3, 5}, -3, 3);
  check_binary(O::matmul, {3, 4}, {4, 2});
  check_binary(O::add_bias, {3, 4}, {4});
  check_binary(O::add_bias, {2, 3, 2, 2}, {3});
}

TEST_CASE("sum of all elements has rank 0 and mean divides by count") {
  Var x(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK(O::sum(x).value().rank() == 0);
  CHECK(O::sum(x).item() == doctest::Approx(10));
  CHECK(O::mean(x).item() == doctest::Approx(2.5));
}

TEST_CASE("softmax rows are a simplex") {
  auto rng = rng_for(3);
  Var x(oracle::random_tensor({4, 6}, rng, -5, 5));
  const Tensor p = O::softmax(x).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += p[r * 6 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("conv2d matches a direct loop implementation") {
  auto rng = rng_for(11);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {2, 1}, {1, 1}}) {
    const Tensor x = oracle::random_tensor({2, 3, 6, 6}, rng);
    const Tensor w = oracle::random_tensor({4, 3, 4, 4}, rng);
    const Tensor ours = O::conv2d(Var(x), Var(w), {stride, pad}).value();
    const Tensor ref = naive_conv(x, w, stride, pad);
    REQUIRE(ours.shape() == ref.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(ours[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv adjoints satisfy the inner-product identity") {
  auto rng = rng_for(12);
  const O::ConvGeometry g{2, 1};
  const Tensor x = oracle::random_tensor({2, 2, 6, 6}, rng);
  const Tensor w = oracle::random_tensor({3, 2, 4, 4}, rng);
  const Tensor y = O::conv2d(Var(x), Var(w), g).value();
  const Tensor gy = oracle::random_tensor(y.shape(), rng);
  const Tensor gx = O::conv2d_input_grad(Var(gy), Var(w), x.shape(), g).value();
  const Tensor gw = O::conv2d_weight_grad(Var(x), Var(gy), w.shape(), g).value();
  CHECK(dot(y, gy) == doctest::Approx(dot(x, gx)).epsilon(1e-12));
  CHECK(dot(y, gy) == doctest::Approx(dot(w, gw)).epsilon(1e-12));
}

TEST_CASE("conv ops match finite differences") {
  auto rng = rng_for(13);
  const O::ConvGeometry g{2, 1};
  Var x(oracle::random_tensor({2, 2, 4, 4}, rng), true);
  Var w(oracle::random_tensor({3, 2, 4, 4}, rng), true);
  const Tensor w0 = oracle::random_tensor({2, 3, 2, 2}, rng);
  CHECK(oracle::finite_difference_check(
            [&] { return O::sum(O::mul_const(O::conv2d(x, w, g), w0)); }, {x, w})
            .max_rel_error < 1e-6);
  Var gy(oracle::random_tensor({2, 3, 2, 2}, rng), true);
  const Tensor w1 = oracle::random_tensor({2, 2, 4, 4}, rng);
  const Tensor w2 = oracle::random_tensor({3, 2, 4, 4}, rng);
  CHECK(oracle::finite_difference_check(
            [&] { return O::sum(O::mul_const(O::conv2d_input_grad(gy, w, x.shape(), g), w1)); },
            {gy, w})
            .max_rel_error < 1e-6);
  CHECK(oracle::finite_difference_check(
            [&] { return O::sum(O::mul_const(O::conv2d_weight_grad(x, gy, w.shape(), g), w2)); },
            {x, gy})
            .max_rel_error < 1e-6);
}

TEST_CASE("double backward through conv matches finite differences") {
  // loss = ||d/dx sigmoid(leaky(conv(x, w)) v)||^2, differentiated in w and v.
  auto rng = rng_for(21);
  const O::ConvGeometry g{2, 1};
  Var x(oracle::random_tensor({2, 1, 4, 4}, rng), true);
  Var w(oracle::random_tensor({2, 1, 4, 4}, rng), true);
  Var v(oracle::random_tensor({8, 1}, rng), true);
  auto loss = [&] {
    const Var h = O::leaky_relu(O::conv2d(x, w, g), 0.2);
    const Var s = O::sigmoid(O::matmul(O::flatten(h), v));
    const Var gx = imbgan::grad(O::sum(s), std::vector<Var>{x}, true)[0];
    return O::sum(O::mul(gx, gx));
  };
  CHECK(oracle::finite_difference_check(loss, {w, v}).max_rel_error < 1e-5);
}

TEST_CASE("grad returns zeros for unreached inputs and respects no-grad mode") {
  Var a(Tensor({2}, {1, 2}), true);
  Var b(Tensor({3}, {1, 2, 3}), true);
  const auto g = imbgan::grad(O::sum(O::mul(a, a)), std::vector<Var>{a, b});
  CHECK(g[0].value() == Tensor({2}, {2, 4}));
  CHECK(g[1].value() == Tensor({3}));
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    CHECK_FALSE(O::mul(a, a).requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("gradients accumulate over shared subexpressions") {
  Var a(Tensor::scalar(3.0), true);
  const Var y = O::mul(O::add(a, a), a);  // 2a^2
  CHECK(imbgan::grad(y, std::vector<Var>{a})[0].item() == doctest::Approx(12.0));
}
