#include <cmath>
#include <functional>
#include <random>

#include "bnc/conv.hpp"
#include "bnc/grad_check.hpp"
#include "bnc/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bnc;
using bnc::testing::random_tensor;
using T = Tensord;

namespace {

// Naive triple loop used as the convolution oracle.
T naive_conv1d(const T& x, const T& w, const T& b, Index stride, Index dilation, Index padding) {
  const Index c_in = x.dim(0), t_in = x.dim(1), c_out = w.dim(0), k = w.dim(2);
  const Index t_out = (t_in + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
  Array<double> out = Array<double>::Zero(c_out * t_out);
  for (Index o = 0; o < c_out; ++o)
    for (Index t = 0; t < t_out; ++t) {
      double acc = b[o];
      for (Index i = 0; i < c_in; ++i)
        for (Index j = 0; j < k; ++j) {
          const Index src = t * stride + j * dilation - padding;
          if (src >= 0 && src < t_in) acc += w[(o * c_in + i) * k + j] * x[i * t_in + src];
        }
      out[o * t_out + t] = acc;
    }
  return T({c_out, t_out}, out);
}

double check(const std::function<T(const T&)>& f, const T& x) { return grad_check<double>(f, x, 1e-6); }

}  // namespace

TEST_CASE("conv1d matches hand-computed and naive references") {
  const T x = T::from({1, 4}, {1, 2, 3, 4});
  SUBCASE("identity kernel") {
    const T y = conv1d(x, T::ones({1, 1, 1}), T::zeros({1}));
    CHECK(y.shape() == Shape{1, 4});
    for (Index i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(x[i]));
  }
  SUBCASE("stride two box kernel") {
    const T y = conv1d(x, T::ones({1, 1, 2}), T::zeros({1}), {.stride = 2});
    REQUIRE(y.numel() == 2);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 7.0);
  }
  SUBCASE("dilated random case") {
    std::mt19937_64 rng(1);
    const T in = random_tensor({2, 16}, rng);
    const T w = random_tensor({3, 2, 7}, rng);
    const T b = random_tensor({3}, rng);
    for (Index pad : {2, 9}) {
      const T y = conv1d(in, w, b, {.stride = 1, .dilation = 3, .padding = pad});
      const T ref = naive_conv1d(in, w, b, 1, 3, pad);
      REQUIRE(y.shape() == ref.shape());
      CHECK((y.data() - ref.data()).abs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("shape errors name the dimension") {
    CHECK_THROWS_AS(conv1d(x, T::ones({1, 2, 1}), T::zeros({1})), ShapeError);
    CHECK_THROWS_WITH_AS(conv1d(x, T::ones({1, 1, 9}), T::zeros({1})),
                         doctest::Contains("time dimension"), ShapeError);
  }
}

TEST_CASE("grouped conv1d equals independent per-group convolutions") {
  std::mt19937_64 rng(2);
  const T x = random_tensor({4, 12}, rng);
  const T w = random_tensor({6, 2, 3}, rng);
  const T b = random_tensor({6}, rng);
  const T y = conv1d(x, w, b, {.stride = 2, .padding = 1, .groups = 2});
  for (Index g = 0; g < 2; ++g) {
    const T xg = slice(x, 0, 2 * g, 2);
    const T wg = slice(w, 0, 3 * g, 3);
    const T bg = slice(b, 0, 3 * g, 3);
    const T ref = naive_conv1d(xg, wg, bg, 2, 1, 1);
    const T got = slice(y, 0, 3 * g, 3);
    CHECK((got.data() - ref.data()).abs().maxCoeff() < 1e-12);
  }
  CHECK(grad_check<double>([&] { return sum(square(conv1d(x, w, b, {.stride = 2, .padding = 1, .groups = 2}))); },
                           {x, w, b}) < 1e-4);
}

TEST_CASE("conv1d_transpose shapes and gradients") {
  const T y = conv1d_transpose(T::from({1, 2}, {1, 1}), T::ones({1, 1, 2}), T::zeros({1}), 2);
  CHECK(y.shape() == Shape{1, 4});
  for (Index i = 0; i < 4; ++i) CHECK(y[i] == 1.0);

  std::mt19937_64 rng(3);
  const T x = random_tensor({3, 5}, rng);
  const T w = random_tensor({3, 2, 6}, rng);
  const T b = random_tensor({2}, rng);
  CHECK(check([&](const T& in) { return sum(conv1d_transpose(in, w, b, 3)); }, x) < 1e-4);
  CHECK(grad_check<double>([&] { return sum(square(conv1d_transpose(x, w, b, 3))); }, {x, w, b}) < 1e-4);

  // Upsample by s then a strided conv with kernel 2s and padding s/2 restores T.
  const T up = conv1d_transpose(x, T::ones({3, 2, 4}), T::zeros({2}), 2);
  CHECK(up.dim(1) == 10);
  const T down = conv1d(up, T::ones({3, 2, 4}), T::zeros({3}), {.stride = 2, .padding = 1});
  CHECK(down.dim(1) == 5);
}

TEST_CASE("linear") {
  const T x = T::from({2}, {1, 1});
  const T w = T::from({2, 2}, {1, 2, 3, 4});
  const T y = linear(x, w, T::zeros({2}));
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 7.0);

  const T eye = T::from({2, 2}, {1, 0, 0, 1});
  const T z = T::from({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK((linear(z, eye, T::zeros({2})).data() - z.data()).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(linear(T::zeros({3}), eye, T::zeros({2})), ShapeError);

  std::mt19937_64 rng(4);
  const T a = random_tensor({4, 3}, rng), wa = random_tensor({5, 3}, rng), ba = random_tensor({5}, rng);
  CHECK(grad_check<double>([&] { return sum(square(linear(a, wa, ba))); }, {a, wa, ba}) < 1e-4);
}

TEST_CASE("activations") {
  const T x = T::from({3}, {-1, 0, 2});
  const T r = relu(x);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);
  CHECK(tanh(T::scalar(0.0)).item() == 0.0);

  std::mt19937_64 rng(5);
  for (auto kind : {Activation::elu, Activation::relu, Activation::leaky_relu, Activation::tanh,
                    Activation::sigmoid, Activation::softplus}) {
    T p = random_tensor({7, 3}, rng, -3, 3);
    // Keep away from the kink of piecewise-linear activations.
    for (Index i = 0; i < p.numel(); ++i)
      if (std::abs(p[i]) < 1e-3) p.mutable_data()[i] = 0.5;
    CHECK(check([&](const T& in) { return sum(square(activation(in, kind))); }, p) < 1e-4);
  }
}

TEST_CASE("backward semantics") {
  SUBCASE("sum gives ones") {
    T x = T::zeros({2, 3});
    x.set_requires_grad(true);
    backward(sum(x));
    CHECK(x.grad().isApprox(Array<double>::Ones(6)));
    clear_tape<double>();
  }
  SUBCASE("sum of squares") {
    T x = T::from({3}, {1, 2, 3});
    x.set_requires_grad(true);
    backward(sum(x * x));
    CHECK(x.grad()[0] == 2.0);
    CHECK(x.grad()[1] == 4.0);
    CHECK(x.grad()[2] == 6.0);
    clear_tape<double>();
  }
  SUBCASE("repeated calls accumulate") {
    T x = T::from({2}, {1, 2});
    x.set_requires_grad(true);
    const T loss = sum(mul_scalar(x, 3.0));
    backward(loss);
    backward(loss);
    CHECK(x.grad()[0] == 6.0);
    clear_tape<double>();
  }
  SUBCASE("non-scalar loss rejected") {
    T x = T::zeros({2});
    x.set_requires_grad(true);
    CHECK_THROWS_AS(backward(x * x), ShapeError);
    clear_tape<double>();
  }
  SUBCASE("tensor without requires_grad never accumulates") {
    T x = T::from({2}, {1, 2});
    T c = T::from({2}, {3, 4});
    x.set_requires_grad(true);
    backward(sum(x * c));
    CHECK_FALSE(c.has_grad());
    clear_tape<double>();
  }
  SUBCASE("fan-out sums contributions") {
    std::mt19937_64 rng(6);
    const T x = random_tensor({5}, rng);
    CHECK(check([](const T& in) { return sum(sin(in) * exp(in)) + sum(square(in)); }, x) < 1e-6);
  }
  SUBCASE("composite conv -> activation -> reduce") {
    std::mt19937_64 rng(7);
    const T x = random_tensor({2, 20}, rng), w = random_tensor({3, 2, 5}, rng), b = random_tensor({3}, rng);
    CHECK(grad_check<double>([&] { return mean(elu(conv1d(x, w, b, {.dilation = 2, .padding = 4}))); },
                             {x, w, b}) < 1e-4);
  }
}

TEST_CASE("grad_check contract") {
  std::mt19937_64 rng(8);
  const T x = random_tensor({4, 2}, rng);
  CHECK(grad_check<double>([](const T& in) { return sum(in); }, x) < 1e-10);
  CHECK(grad_check<double>([](const T& in) { return sum(square(in)); }, x) < 1e-7);
  CHECK_THROWS_AS(grad_check<double>([](const T& in) { return square(in); }, x), ShapeError);
}

TEST_CASE("every elementwise, shape and reduction op passes grad_check on three shapes") {
  std::mt19937_64 rng(9);
  const std::vector<Shape> shapes{{5}, {3, 4}, {2, 3, 4}};
  for (const auto& shape : shapes) {
    CAPTURE(to_string(shape));
    const T a = random_tensor(shape, rng, 0.5, 2.0);
    const T b = random_tensor(shape, rng, 0.5, 2.0);
    const T s = random_tensor(shape, rng, -2.0, 2.0);
    auto two = [&](auto&& f) { return grad_check<double>([&] { return sum(f(a, b)); }, {a, b}, 1e-6); };
    CHECK(two([](const T& p, const T& q) { return p + q; }) < 1e-4);
    CHECK(two([](const T& p, const T& q) { return p - q; }) < 1e-4);
    CHECK(two([](const T& p, const T& q) { return p * q; }) < 1e-4);
    CHECK(two([](const T& p, const T& q) { return p / q; }) < 1e-4);
    CHECK(two([](const T& p, const T& q) { return atan2(p - 1.0, q - 1.2); }) < 1e-4);
    CHECK(check([](const T& p) { return sum(p * 2.5 + 1.0); }, a) < 1e-4);
    CHECK(check([](const T& p) { return sum(sqrt(p)); }, a) < 1e-4);
    CHECK(check([](const T& p) { return sum(log(p)); }, a) < 1e-4);
    CHECK(check([](const T& p) { return sum(exp(p)); }, s) < 1e-4);
    CHECK(check([](const T& p) { return sum(sin(p) * cos(p)); }, s) < 1e-4);
    CHECK(check([](const T& p) { return sum(abs(p)); }, s) < 1e-4);
    CHECK(check([](const T& p) { return l1_norm(p); }, s) < 1e-4);
    CHECK(check([](const T& p) { return l2_norm(p); }, s) < 1e-4);
    CHECK(check([](const T& p) { return mean(square(p)); }, s) < 1e-4);
    CHECK(check([](const T& p) { return sum(clamp_min(p, 0.3)); }, s) < 1e-4);
    CHECK(check([&](const T& p) { return sum(square(reshape(p, {p.numel()}))); }, s) < 1e-4);
    for (int axis = 0; axis < s.rank(); ++axis) {
      CHECK(check([&](const T& p) { return sum(square(sum(p, axis))); }, s) < 1e-4);
      CHECK(check([&](const T& p) { return sum(square(mean(p, axis))); }, s) < 1e-4);
      CHECK(check([&](const T& p) { return sum(square(concat<double>({p, p * 2.0}, axis))); }, s) < 1e-4);
      if (s.dim(axis) > 1)
        CHECK(check([&](const T& p) { return sum(square(slice(p, axis, 1, s.dim(axis) - 1))); }, s) < 1e-4);
      CHECK(check([&](const T& p) { return sum(square(pad(p, axis, 2, 1)) * 1.5); }, s) < 1e-4);
    }
    CHECK(check([](const T& p) { return sum(square(cumsum(p))); }, s) < 1e-4);
  }
}

TEST_CASE("matmul, transpose, interpolation and straight-through") {
  std::mt19937_64 rng(10);
  const T a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  CHECK(grad_check<double>([&] { return sum(square(matmul(a, b))); }, {a, b}) < 1e-4);
  CHECK(check([](const T& p) { return sum(square(transpose(p)) * 0.5); }, a) < 1e-4);

  const T sig = random_tensor({2, 10}, rng);
  T pos = random_tensor({2, 7}, rng, 0.2, 8.7);
  for (Index i = 0; i < pos.numel(); ++i)
    if (std::abs(pos[i] - std::round(pos[i])) < 1e-3) pos.mutable_data()[i] += 0.1;
  CHECK(grad_check<double>([&] { return sum(square(interp_linear(sig, pos))); }, {sig, pos}, 1e-7) < 1e-4);
  CHECK(check([](const T& p) { return sum(square(upsample_linear(p, 25))); }, sig) < 1e-4);

  const T z = random_tensor({4}, rng);
  z.set_requires_grad(true);
  const T q = T::from({4}, {1, 2, 3, 4});
  const T out = straight_through(z, q);
  CHECK(out.data().isApprox(q.data()));
  backward(sum(out * 3.0));
  CHECK(z.grad().isApprox(Array<double>::Constant(4, 3.0)));
  clear_tape<double>();
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 rng(11);
  const T x = random_tensor({3, 64}, rng), w = random_tensor({4, 3, 7}, rng), b = random_tensor({4}, rng);
  const T y1 = elu(conv1d(x, w, b, {.dilation = 3, .padding = 9}));
  const T y2 = elu(conv1d(x, w, b, {.dilation = 3, .padding = 9}));
  CHECK((y1.data() == y2.data()).all());
}

TEST_CASE("conv2d matches naive reference and gradients") {
  std::mt19937_64 rng(12);
  const T x = random_tensor({2, 6, 7}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
  const Conv2dOptions o{.stride_h = 1, .stride_w = 2, .pad_h = 1, .pad_w = 1};
  const T y = conv2d(x, w, b, o);
  REQUIRE(y.shape() == Shape{3, 6, 4});
  for (Index co = 0; co < 3; ++co)
    for (Index i = 0; i < 6; ++i)
      for (Index j = 0; j < 4; ++j) {
        double acc = b[co];
        for (Index ci = 0; ci < 2; ++ci)
          for (Index p = 0; p < 3; ++p)
            for (Index q = 0; q < 3; ++q) {
              const Index r = i + p - 1, c = j * 2 + q - 1;
              if (r >= 0 && r < 6 && c >= 0 && c < 7) acc += w[((co * 2 + ci) * 3 + p) * 3 + q] * x[(ci * 6 + r) * 7 + c];
            }
        CHECK(y[(co * 6 + i) * 4 + j] == doctest::Approx(acc).epsilon(1e-12));
      }
  CHECK(grad_check<double>([&] { return sum(square(conv2d(x, w, b, o))); }, {x, w, b}) < 1e-4);
}
