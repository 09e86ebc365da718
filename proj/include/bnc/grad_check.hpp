#pragma once

// Central finite-difference verification of tape gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "bnc/tensor.hpp"

namespace bnc {

// Max over checked coordinates of |analytic - numeric| / max(1, |numeric|).
// `max_coords` > 0 checks a seeded random subset of coordinates per tensor.
template <typename Scalar>
Scalar grad_check(const std::function<Tensor<Scalar>()>& f, const std::vector<Tensor<Scalar>>& inputs,
                  Scalar eps = Scalar(1e-5), Index max_coords = 0, std::uint64_t seed = 7) {
  auto& tape = Tape<Scalar>::active();
  std::vector<bool> saved;
  for (const auto& t : inputs) {
    saved.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  tape.clear();
  Tensor<Scalar> y = f();
  if (!y.is_scalar()) {
    tape.clear();
    throw ShapeError("grad_check: function must be scalar-valued, got " + to_string(y.shape()));
  }
  tape.backward(y);
  tape.clear();

  auto eval = [&]() {
    NoGradGuard<Scalar> guard;
    return f().item();
  };

  std::mt19937_64 rng(seed);
  Scalar worst = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& t = inputs[i];
    const Array<Scalar> analytic = t.grad_or_zero();
    std::vector<Index> coords(static_cast<std::size_t>(t.numel()));
    for (Index k = 0; k < t.numel(); ++k) coords[static_cast<std::size_t>(k)] = k;
    if (max_coords > 0 && t.numel() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(max_coords));
    }
    auto& data = t.mutable_data();
    for (Index k : coords) {
      const Scalar orig = data[k];
      data[k] = orig + eps;
      const Scalar up = eval();
      data[k] = orig - eps;
      const Scalar down = eval();
      data[k] = orig;
      const Scalar numeric = (up - down) / (Scalar(2) * eps);
      worst = std::max(worst, std::abs(analytic[k] - numeric) / std::max(Scalar(1), std::abs(numeric)));
    }
    t.zero_grad();
    t.set_requires_grad(saved[i]);
  }
  return worst;
}

template <typename Scalar>
Scalar grad_check(const std::function<Tensor<Scalar>(const Tensor<Scalar>&)>& f, const Tensor<Scalar>& x,
                  Scalar eps = Scalar(1e-5)) {
  return grad_check<Scalar>([&]() { return f(x); }, std::vector<Tensor<Scalar>>{x}, eps);
}

}  // namespace bnc
