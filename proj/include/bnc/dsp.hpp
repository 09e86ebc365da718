#pragma once

// Signal-processing kernels used by losses, discriminators and metrics.
// STFT is computed as a dense product with a windowed DFT basis so that
// magnitude and phase are both differentiable with respect to the signal.

#include "bnc/pose.hpp"
#include "bnc/tensor.hpp"

namespace bnc {

struct StftConfig {
  Index fft_size = 1024;
  Index hop = 256;

  void validate() const;
  Index bins() const { return fft_size / 2 + 1; }
  Index frames(Index length) const { return (length - fft_size) / hop + 1; }
};

struct MelConfig {
  Index n_mels = 80;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 selects sample_rate / 2
  double sample_rate = 48000.0;
  double log_floor = 1e-5;

  double upper() const { return f_max > 0.0 ? f_max : sample_rate / 2.0; }
  void validate(const StftConfig& stft) const;
};

template <typename Scalar>
struct Spectrum {
  Tensor<Scalar> magnitude;  // [frames x bins], >= 0
  Tensor<Scalar> phase;      // [frames x bins], in (-pi, pi]
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Periodic Hann window of length n.
Array<double> hann_window(Index n);

// Triangular filters on the HTK mel scale, [n_mels x bins].
RowMatrix<double> mel_filterbank(const StftConfig& stft, const MelConfig& mel);

// Center frequency in Hz of each mel filter.
std::vector<double> mel_center_frequencies(const MelConfig& mel);

// Overlapping frames of a 1-d signal, [frames x fft_size], no padding.
template <typename Scalar>
Tensor<Scalar> frame_signal(const Tensor<Scalar>& x, Index frame_len, Index hop);

template <typename Scalar>
Spectrum<Scalar> stft(const Tensor<Scalar>& x, const StftConfig& cfg);

template <typename Scalar>
Tensor<Scalar> stft_magnitude(const Tensor<Scalar>& x, const StftConfig& cfg);

// log(max(mel_filter . |STFT|, log_floor)), [frames x n_mels].
template <typename Scalar>
Tensor<Scalar> mel_spectrogram(const Tensor<Scalar>& x, const StftConfig& stft, const MelConfig& mel);

// Strided average pooling over time of x [C x T] after zero-padding T up
// to a multiple of factor.
template <typename Scalar>
Tensor<Scalar> downsample_avg(const Tensor<Scalar>& x, Index factor);

// Samples the track at `target_len` instants start_time + i / rate.
// Positions are interpolated linearly, quaternions by normalized lerp.
// Rows follow the 14-value condition layout, in meters / unit quaternions.
template <typename Scalar>
Tensor<Scalar> resample_condition(const PoseTrack& track, Index target_len, double rate, double start_time = 0.0);

// Single pose lookup used by the resampler.
Pose interpolate_pose(const PoseTrack& track, double time);

}  // namespace bnc
