#pragma once

// Generator and discriminator loss terms. Audio arguments are stereo
// [2 x T] tensors for a single clip; batch averaging is left to the caller.

#include <cstdint>
#include <string>
#include <vector>

#include "bnc/adversary.hpp"
#include "bnc/dsp.hpp"

namespace bnc {

inline constexpr double kPhaseMaskFloor = 1e-8;

struct LossWeights {
  double diff = 1.0;
  double pha = 0.01;
  double adv = 1.0;
  double fm = 2.0;
  double mel = 45.0;

  static LossWeights standard() { return {}; }
  // Starting point taken from the SoundStream recipe; trains poorly here.
  static LossWeights soundstream() { return {1.0, 0.01, 1.0, 100.0, 1.0}; }
  static LossWeights zero() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }

  void validate() const;
};

// Spectral front ends shared by the phase and mel terms.
struct SpectralConfig {
  StftConfig stft;
  MelConfig mel;

  static SpectralConfig for_rate(double sample_rate);
  void validate() const;
};

struct LossReport {
  std::int64_t step = 0;
  double l_diff = 0, l_pha = 0, l_adv_g = 0, l_fm = 0, l_mel = 0;
  double total = 0;

  double weighted_sum(const LossWeights& w) const;

  static std::string csv_header();
  std::string csv_line() const;
  static LossReport parse_csv_line(const std::string& line);
};

// Unweighted scalar terms, still attached to the tape.
template <typename Scalar>
struct LossTerms {
  Tensor<Scalar> diff = Tensor<Scalar>::scalar(0);
  Tensor<Scalar> pha = Tensor<Scalar>::scalar(0);
  Tensor<Scalar> adv = Tensor<Scalar>::scalar(0);
  Tensor<Scalar> fm = Tensor<Scalar>::scalar(0);
  Tensor<Scalar> mel = Tensor<Scalar>::scalar(0);
};

template <typename Scalar>
struct GeneratorLoss {
  Tensor<Scalar> total;
  LossReport report;
};

// ||(yh_l - yh_r) - (y_l - y_r)||_2 / sqrt(T).
template <typename Scalar>
Tensor<Scalar> l_diff(const Tensor<Scalar>& y_hat, const Tensor<Scalar>& y);

// sum_k w_k * wrap(phase_hat_k - phase_k)^2 with w = target_mag / sum(target_mag)
// over bins where target_mag > kPhaseMaskFloor. Zero when nothing survives the mask.
template <typename Scalar>
Tensor<Scalar> weighted_phase_error(const Tensor<Scalar>& phase_hat, const Tensor<Scalar>& phase,
                                    const Tensor<Scalar>& target_mag);

// weighted_phase_error of the STFTs, summed over both ears.
template <typename Scalar>
Tensor<Scalar> l_phase(const Tensor<Scalar>& y_hat, const Tensor<Scalar>& y, const StftConfig& stft);

// Each argument holds one logit tensor per discriminator.
template <typename Scalar>
Tensor<Scalar> hinge_d(const std::vector<Tensor<Scalar>>& real, const std::vector<Tensor<Scalar>>& fake);

template <typename Scalar>
Tensor<Scalar> hinge_g(const std::vector<Tensor<Scalar>>& fake);

// Mean over discriminators of the mean over layers of ||r - f||_2 / numel.
// Real features are treated as constants.
template <typename Scalar>
Tensor<Scalar> feature_matching(const std::vector<std::vector<Tensor<Scalar>>>& real,
                                const std::vector<std::vector<Tensor<Scalar>>>& fake);

// mean |a - b| over the cells of two log-mel spectrograms.
template <typename Scalar>
Tensor<Scalar> log_mel_l1(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

// log_mel_l1 per ear, summed over ears.
template <typename Scalar>
Tensor<Scalar> mel_loss(const Tensor<Scalar>& y_hat, const Tensor<Scalar>& y, const SpectralConfig& cfg);

// Throws NumericError naming the first non-finite term.
template <typename Scalar>
GeneratorLoss<Scalar> total_generator_loss(const LossTerms<Scalar>& terms, const LossWeights& w,
                                           std::int64_t step = 0);

template <typename Scalar>
std::vector<Tensor<Scalar>> logits_of(const std::vector<DiscOutput<Scalar>>& outs) {
  std::vector<Tensor<Scalar>> v;
  for (const auto& o : outs) v.push_back(o.logits);
  return v;
}

template <typename Scalar>
std::vector<std::vector<Tensor<Scalar>>> features_of(const std::vector<DiscOutput<Scalar>>& outs) {
  std::vector<std::vector<Tensor<Scalar>>> v;
  for (const auto& o : outs) v.push_back(o.features);
  return v;
}

}  // namespace bnc
