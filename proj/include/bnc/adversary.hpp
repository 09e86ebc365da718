#pragma once

// Discriminators: a single-scale STFT discriminator and a three-scale
// waveform discriminator with projection conditioning.

#include <random>
#include <vector>

#include "bnc/dsp.hpp"
#include "bnc/model_config.hpp"
#include "bnc/nn.hpp"

namespace bnc {

template <typename Scalar>
struct DiscOutput {
  Tensor<Scalar> logits;
  std::vector<Tensor<Scalar>> features;
};

// logit(t) = head(phi(t)) + <embed(c(t)), phi(t)>, phi [frames x F],
// cond [len x 14] resampled linearly to frames. A null cond drops the
// projection term.
template <typename Scalar>
Tensor<Scalar> projection_logit(const Tensor<Scalar>& phi, const Tensor<Scalar>* cond, const LinearLayer<Scalar>& head,
                                const LinearLayer<Scalar>& embed);

template <typename Scalar>
class StftDiscriminator {
 public:
  static constexpr int kUnits = 6;

  StftDiscriminator(const ModelConfig& cfg, ParamStore<Scalar>& ps, std::mt19937_64& rng);

  // y [2 x T] -> logits [1 x frames' x bins'], 1 + kUnits features.
  DiscOutput<Scalar> operator()(const Tensor<Scalar>& y) const;

 private:
  struct Unit {
    Conv2dLayer<Scalar> conv1, conv2, skip;
  };
  StftConfig stft_;
  Conv2dLayer<Scalar> stem_;
  std::vector<Unit> units_;
  Conv2dLayer<Scalar> head_;
};

template <typename Scalar>
class ScaleDiscriminator {
 public:
  static constexpr int kStrided = 4;

  ScaleDiscriminator(const ModelConfig& cfg, ParamStore<Scalar>& ps, const std::string& name, std::mt19937_64& rng);

  // y [2 x T'] -> logits [frames], kStrided + 2 features.
  DiscOutput<Scalar> operator()(const Tensor<Scalar>& y, const Tensor<Scalar>* cond) const;

 private:
  std::vector<Conv1dLayer<Scalar>> layers_;  // stem, strided..., post
  LinearLayer<Scalar> head_, embed_;
};

template <typename Scalar>
class MultiScaleDiscriminator {
 public:
  static constexpr Index kFactors[3] = {1, 2, 4};

  MultiScaleDiscriminator(const ModelConfig& cfg, ParamStore<Scalar>& ps, std::mt19937_64& rng);

  std::vector<DiscOutput<Scalar>> operator()(const Tensor<Scalar>& y, const Tensor<Scalar>* cond) const;

 private:
  std::vector<ScaleDiscriminator<Scalar>> scales_;
};

// STFT discriminator followed by the three waveform scales.
template <typename Scalar>
class Discriminators {
 public:
  Discriminators(const ModelConfig& cfg, std::uint64_t seed, bool projection = true);
  Discriminators(const Discriminators&) = delete;
  Discriminators& operator=(const Discriminators&) = delete;
  Discriminators(Discriminators&&) = default;

  // cond: normalized condition frames [len x 14].
  std::vector<DiscOutput<Scalar>> operator()(const Tensor<Scalar>& y, const Tensor<Scalar>& cond) const;

  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }
  bool projection() const { return projection_; }

  void save(Archive& ar) const { params_.save(ar, "disc."); }
  void load(const Archive& ar) { params_.load(ar, "disc."); }

 private:
  ParamStore<Scalar> params_;
  std::mt19937_64 rng_;
  StftDiscriminator<Scalar> stft_;
  MultiScaleDiscriminator<Scalar> msd_;
  bool projection_;
};

}  // namespace bnc
