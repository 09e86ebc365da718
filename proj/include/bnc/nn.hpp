#pragma once

// Named parameter registry and the few layer shapes the networks use.

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bnc/checkpoint.hpp"
#include "bnc/conv.hpp"
#include "bnc/error.hpp"
#include "bnc/ops.hpp"

namespace bnc {

template <typename Scalar>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> tensor;
    bool trainable;
  };

  // Uniform(-bound, bound) draw; bound 0 gives zeros. Values are drawn in
  // double so both precisions start from the same weights.
  Tensor<Scalar> add(const std::string& name, const Shape& shape, double bound, std::mt19937_64& rng,
                     bool trainable = true) {
    for (const auto& e : entries_)
      if (e.name == name) throw ConfigError("duplicate parameter '" + name + "'");
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Array<Scalar> v(bnc::numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = bound == 0.0 ? Scalar(0) : Scalar(bound * u(rng));
    Tensor<Scalar> t(shape, std::move(v), trainable);
    entries_.push_back({name, t, trainable});
    return t;
  }

  Tensor<Scalar> add_fixed(const std::string& name, Tensor<Scalar> value) {
    entries_.push_back({name, value, false});
    return value;
  }

  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<Tensor<Scalar>> trainable() const {
    std::vector<Tensor<Scalar>> out;
    for (const auto& e : entries_)
      if (e.trainable) out.push_back(e.tensor);
    return out;
  }

  const Tensor<Scalar>& get(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e.tensor;
    throw ConfigError("no parameter named '" + name + "'");
  }

  void zero_grad() const {
    for (const auto& e : entries_) e.tensor.zero_grad();
  }

  Index count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.trainable ? e.tensor.numel() : 0;
    return n;
  }

  void save(Archive& ar, const std::string& prefix) const {
    for (const auto& e : entries_) ar.put(prefix + e.name, e.tensor);
  }

  void load(const Archive& ar, const std::string& prefix) const {
    for (const auto& e : entries_) ar.load_into(prefix + e.name, e.tensor);
  }

 private:
  std::vector<Entry> entries_;
};

inline double fan_in_bound(Index fan_in, double gain = 1.0) { return gain / std::sqrt(double(fan_in)); }

template <typename Scalar>
struct Conv1dLayer {
  Tensor<Scalar> weight, bias;
  Conv1dOptions opt;

  static Conv1dLayer make(ParamStore<Scalar>& ps, const std::string& name, Index c_in, Index c_out, Index k,
                          Conv1dOptions opt, std::mt19937_64& rng, double gain = 1.0) {
    const double b = fan_in_bound(c_in / opt.groups * k, gain);
    return {ps.add(name + ".weight", {c_out, c_in / opt.groups, k}, b, rng), ps.add(name + ".bias", {c_out}, b, rng),
            opt};
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return conv1d(x, weight, bias, opt); }
};

template <typename Scalar>
struct ConvTranspose1dLayer {
  Tensor<Scalar> weight, bias;
  Index stride = 1;

  static ConvTranspose1dLayer make(ParamStore<Scalar>& ps, const std::string& name, Index c_in, Index c_out,
                                   Index stride, std::mt19937_64& rng) {
    const double b = fan_in_bound(c_in * 2);
    return {ps.add(name + ".weight", {c_in, c_out, 2 * stride}, b, rng), ps.add(name + ".bias", {c_out}, b, rng),
            stride};
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return conv1d_transpose(x, weight, bias, stride); }
};

template <typename Scalar>
struct Conv2dLayer {
  Tensor<Scalar> weight, bias;
  Conv2dOptions opt;

  static Conv2dLayer make(ParamStore<Scalar>& ps, const std::string& name, Index c_in, Index c_out, Index kh,
                          Index kw, Conv2dOptions opt, std::mt19937_64& rng) {
    const double b = fan_in_bound(c_in * kh * kw);
    return {ps.add(name + ".weight", {c_out, c_in, kh, kw}, b, rng), ps.add(name + ".bias", {c_out}, b, rng), opt};
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return conv2d(x, weight, bias, opt); }
};

template <typename Scalar>
struct LinearLayer {
  Tensor<Scalar> weight, bias;

  static LinearLayer make(ParamStore<Scalar>& ps, const std::string& name, Index f_in, Index f_out,
                          std::mt19937_64& rng, double gain = 1.0) {
    const double b = fan_in_bound(f_in, gain);
    return {ps.add(name + ".weight", {f_out, f_in}, b, rng), ps.add(name + ".bias", {f_out}, b, rng)};
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return linear(x, weight, bias); }
};

// Sets every parameter whose name starts with `prefix` to zero.
template <typename Scalar>
void zero_params(const ParamStore<Scalar>& ps, const std::string& prefix) {
  for (const auto& e : ps.entries())
    if (e.name.rfind(prefix, 0) == 0) e.tensor.mutable_data().setZero();
}

}  // namespace bnc
