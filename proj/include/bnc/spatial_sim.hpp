#pragma once

// Analytic binaural ground truth: propagation delay and distance gain per
// ear, a head-shadow level difference, an exponentially decaying noise
// reverb tail and a white noise floor.
//
// Room coordinates span [0, width] x [0, width] x [0, height].

#include <cstdint>
#include <limits>

#include "bnc/pose.hpp"
#include "bnc/tensor.hpp"

namespace bnc {

inline constexpr double kMaxWalkSpeed = 1.5;  // m/s
inline constexpr double kMinSourceDistance = 0.1;
inline constexpr double kShadowDb = 6.0;       // far-ear attenuation for a fully lateral source
inline constexpr double kReverbTailEnergy = 0.25;
inline constexpr int kSincHalfWidth = 16;

struct RoomSpec {
  double width = 4.6;   // horizontal extent, both x and y
  double height = 2.4;  // vertical extent
  double rt60 = 0.3;
  double noise_floor_db = -60.0;  // -inf disables the noise floor

  static RoomSpec anechoic() { return {4.6, 2.4, 0.0, -std::numeric_limits<double>::infinity()}; }

  Eigen::Vector3d center() const { return {width / 2, width / 2, height / 2}; }
  bool contains(const Eigen::Vector3d& p, double tol = 1e-9) const;
  void validate() const;
};

struct OracleSeeds {
  std::uint64_t reverb = 0;  // one room response shared by both ears
  std::uint64_t noise = 0;

  static OracleSeeds from_clip_seed(std::uint64_t seed);
  bool operator==(const OracleSeeds&) const = default;
};

// Low-pass-filtered Gaussian walk of the transmitter at the tracker rate;
// the receiver stays at the room center facing +x.
PoseTrack gen_trajectory(const RoomSpec& room, double duration, std::uint64_t seed);

// Static pose: receiver at the room center facing +x, transmitter at
// `distance` meters and `azimuth_deg` degrees (positive toward the left ear).
Pose pose_at_azimuth(const RoomSpec& room, double azimuth_deg, double distance);

// Per-ear gain: 1 / max(distance, 0.1) times a shadow of
// -kShadowDb/2 * (1 - cos(angle between the ear axis and the source)).
double ear_gain(const Pose& pose, int ear);
double ear_distance(const Pose& pose, int ear);

// Interaural delay in samples, right arrival minus left arrival.
double analytic_itd_samples(const Pose& pose, double sample_rate);

// Reverb tail samples following the direct path (sample 1 onward of the
// impulse response); amplitude decays 60 dB over rt60. Empty when rt60 == 0.
std::vector<double> reverb_tail(double rt60, double sample_rate, std::uint64_t seed);

// Decay time estimated from the Schroeder integral, extrapolated from the
// -5 to -35 dB range.
double measure_rt60(const std::vector<double>& impulse_response, double sample_rate);

// x(t - delay) by Hann-windowed sinc interpolation; samples outside x are 0.
double fractional_sample(const std::vector<double>& x, double position);

// Mono source x rendered to [2 x T] at `sample_rate`.
RowMatrix<double> spatialize_oracle(const std::vector<double>& x, const PoseTrack& track, const RoomSpec& room,
                                    double sample_rate, const OracleSeeds& seeds);

// Harmonic, amplitude-modulated test source with peak amplitude 0.5.
std::vector<double> synth_source(Index num_samples, double sample_rate, std::uint64_t seed);

// Integer lag in [-max_lag, max_lag] maximizing sum_t left[t] * right[t + lag];
// positive when the right channel arrives later.
Index interaural_lag(const RowMatrix<double>& stereo, Index max_lag);

// 20 log10(rms(left) / rms(right)).
double interaural_level_db(const RowMatrix<double>& stereo);

}  // namespace bnc
