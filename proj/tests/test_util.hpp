#pragma once

#include <random>

#include "bnc/tensor.hpp"

namespace bnc::testing {

template <typename Scalar = double>
Tensor<Scalar> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array<Scalar> data(numel(shape));
  for (Index i = 0; i < data.size(); ++i) data[i] = Scalar(u(rng));
  return Tensor<Scalar>(shape, std::move(data));
}

}  // namespace bnc::testing
