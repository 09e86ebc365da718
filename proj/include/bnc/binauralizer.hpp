#pragma once

// Receiver side: pose-conditioned decoder and monotone time warp.

#include <numbers>
#include <optional>
#include <random>

#include "bnc/codec.hpp"
#include "bnc/dsp.hpp"
#include "bnc/pose.hpp"

namespace bnc {

inline constexpr double kSpeedOfSound = 343.0;  // m/s
inline constexpr double kEarOffset = 0.09;      // m from head center

// Ear 0 is the left ear (+y in head coordinates), ear 1 the right.
Eigen::Vector3d ear_position(const Pose& pose, int ear);

// Propagation delay from transmitter to each ear, in samples: [2 x T].
RowMatrix<double> geometric_delays(const PoseTrack& track, Index num_samples, double sample_rate,
                                   double start_time = 0.0);

template <typename Scalar>
struct Condition {
  Tensor<Scalar> frames;     // [len x 14] at cond_rate, positions scaled to [-1, 1]
  RowMatrix<double> delays;  // [2 x T] geometric delays; empty means the warp is bypassed

  bool has_warp() const { return delays.size() > 0; }
};

// Positions mapped by room extents to [-1, 1]; quaternions untouched.
template <typename Scalar>
Tensor<Scalar> normalize_condition(const Tensor<Scalar>& raw, const ModelConfig& cfg);

Index condition_frames(Index num_samples, const ModelConfig& cfg);

template <typename Scalar>
Condition<Scalar> make_condition(const PoseTrack& track, Index num_samples, const ModelConfig& cfg,
                                 double start_time = 0.0);

// All-zero condition vector with the warp bypassed (mono pretraining).
template <typename Scalar>
Condition<Scalar> zero_condition(Index num_samples, const ModelConfig& cfg);

// B [F x 14] with N(0, sigma^2) entries.
template <typename Scalar>
Tensor<Scalar> gaussian_fourier_matrix(Index features, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  Array<Scalar> b(features * kConditionDim);
  for (Index i = 0; i < b.size(); ++i) b[i] = Scalar(normal(rng));
  return Tensor<Scalar>({features, Index(kConditionDim)}, std::move(b));
}

// [sin(2 pi c B^T), cos(2 pi c B^T)]: c [len x C], B [F x C] -> [len x 2F].
template <typename Scalar>
Tensor<Scalar> fourier_encode(const Tensor<Scalar>& c, const Tensor<Scalar>& b) {
  const Tensor<Scalar> proj = linear(c, b * Scalar(2 * std::numbers::pi), Tensor<Scalar>::zeros({b.dim(0)}));
  return concat<Scalar>({sin(proj), cos(proj)}, 1);
}

// gamma * features + beta, all [channels x frames].
template <typename Scalar>
Tensor<Scalar> film_apply(const Tensor<Scalar>& features, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta) {
  return features * gamma + beta;
}

template <typename Scalar>
struct ConditionMlp {
  LinearLayer<Scalar> l1, l2, l3;

  static ConditionMlp make(ParamStore<Scalar>& ps, const std::string& name, Index f_in, Index hidden,
                           std::mt19937_64& rng) {
    return {LinearLayer<Scalar>::make(ps, name + ".l1", f_in, hidden, rng),
            LinearLayer<Scalar>::make(ps, name + ".l2", hidden, hidden, rng),
            LinearLayer<Scalar>::make(ps, name + ".l3", hidden, hidden, rng)};
  }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return l3(relu(l2(relu(l1(x))))); }
};

// Read positions p(ear, t) = t - d(t) + c(t) - mean(c), clamped to [0, T-1],
// where r(t) = -d(0) + sum_{1<=s<=t} g(s) * 2 sigmoid(a(s)) is the neural read
// position, g(s) = max(0, 1 - (d(s) - d(s-1))) and c = r - (t - d(t)).
// Monotone for any raw increments a [2 x T]; a = 0 gives the geometric warp.
template <typename Scalar>
Tensor<Scalar> warp_positions(const Tensor<Scalar>& a, const RowMatrix<double>& delays);

// Linear interpolation of signal [2 x T] at positions [2 x T].
template <typename Scalar>
Tensor<Scalar> warp_apply(const Tensor<Scalar>& signal, const Tensor<Scalar>& positions) {
  return interp_linear(signal, positions);
}

template <typename Scalar>
class Decoder {
 public:
  Decoder(const ModelConfig& cfg, ParamStore<Scalar>& ps, std::mt19937_64& rng);

  // latents [L x D], condition MLP output [len x H] -> [2 x L*M] in [-1, 1].
  Tensor<Scalar> operator()(const Tensor<Scalar>& latents, const Tensor<Scalar>& cond_hidden) const;

  Index film_blocks() const { return film_blocks_; }

 private:
  struct Block {
    ConvTranspose1dLayer<Scalar> up;
    std::vector<ResidualUnit<Scalar>> units;
    std::optional<LinearLayer<Scalar>> film;
  };
  Conv1dLayer<Scalar> input_;
  std::vector<Block> blocks_;
  Conv1dLayer<Scalar> output_;
  Index film_blocks_;
};

template <typename Scalar>
class Generator {
 public:
  Generator(const ModelConfig& cfg, std::uint64_t seed);
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;
  Generator(Generator&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<Scalar>& params() { return params_; }
  const ParamStore<Scalar>& params() const { return params_; }
  Codebooks<Scalar>& codebooks() { return books_; }
  const Codebooks<Scalar>& codebooks() const { return books_; }
  CodecFingerprint fingerprint() const { return CodecFingerprint::of(cfg_); }

  Tensor<Scalar> encode(const Tensor<Scalar>& x) const { return encoder_(x); }
  RvqResult<Scalar> quantize(const Tensor<Scalar>& latents) const {
    return rvq_quantize(latents, books_, fingerprint());
  }

  Tensor<Scalar> condition_hidden(const Condition<Scalar>& c) const;
  Tensor<Scalar> decode(const Tensor<Scalar>& latents, const Condition<Scalar>& c) const;
  Tensor<Scalar> warp_field(const Condition<Scalar>& c, Index num_samples) const;

  // Decode, truncate to num_samples, warp (unless bypassed).
  Tensor<Scalar> render(const Tensor<Scalar>& latents, const Condition<Scalar>& c, Index num_samples) const;

  struct Output {
    Tensor<Scalar> audio;  // [2 x T]
    RvqResult<Scalar> rvq;
  };
  Output forward(const Tensor<Scalar>& x, const Condition<Scalar>& c) const;

  Tensor<Scalar> binauralize(const Tensor<Scalar>& x, const Condition<Scalar>& c) const {
    return forward(x, c).audio;
  }
  Tensor<Scalar> binauralize(const CodeGrid& codes, const Condition<Scalar>& c, Index num_samples) const;

  void save(Archive& ar) const;
  void load(const Archive& ar);

 private:
  ModelConfig cfg_;
  ParamStore<Scalar> params_;
  Codebooks<Scalar> books_;
  std::mt19937_64 rng_;
  Encoder<Scalar> encoder_;
  Tensor<Scalar> fourier_;
  ConditionMlp<Scalar> mlp_;
  Decoder<Scalar> decoder_;
  Conv1dLayer<Scalar> warp1_, warp2_;
};

}  // namespace bnc
