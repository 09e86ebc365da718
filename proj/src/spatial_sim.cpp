#include "bnc/spatial_sim.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "bnc/binauralizer.hpp"
#include "bnc/dsp.hpp"
#include "bnc/error.hpp"

namespace bnc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kWalkMargin = 0.25;
constexpr double kWalkTimeConstant = 0.5;  // seconds
constexpr double kWalkSpeedSpread = 0.8;   // m/s
constexpr double kWobble = 0.15;           // vertical excursion around mid height

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Eigen::Quaterniond yaw_rotation(double yaw) { return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ())); }

std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t n = a.size() + b.size() - 1;
  std::vector<double> out(n, 0.0);
  if (std::min(a.size(), b.size()) <= 64) {
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
  }
  std::size_t len = 1;
  while (len < n) len *= 2;
  Eigen::FFT<double> fft;
  std::vector<double> pa(a), pb(b);
  pa.resize(len, 0.0);
  pb.resize(len, 0.0);
  std::vector<std::complex<double>> fa, fb;
  fft.fwd(fa, pa);
  fft.fwd(fb, pb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  std::vector<double> full;
  fft.inv(full, fa);
  std::copy_n(full.begin(), n, out.begin());
  return out;
}

}  // namespace

bool RoomSpec::contains(const Eigen::Vector3d& p, double tol) const {
  return p.x() >= -tol && p.x() <= width + tol && p.y() >= -tol && p.y() <= width + tol && p.z() >= -tol &&
         p.z() <= height + tol;
}

void RoomSpec::validate() const {
  if (!(width > 0.0 && height > 0.0)) throw ConfigError("room extents must be positive");
  if (!(rt60 >= 0.0) || !std::isfinite(rt60)) throw ConfigError("rt60 must be finite and >= 0");
  if (!(noise_floor_db <= 0.0)) throw ConfigError("noise_floor_db must be <= 0 dBFS");
}

OracleSeeds OracleSeeds::from_clip_seed(std::uint64_t seed) {
  std::uint64_t state = seed;
  OracleSeeds s;
  s.reverb = splitmix64(state);
  s.noise = splitmix64(state);
  return s;
}

PoseTrack gen_trajectory(const RoomSpec& room, double duration, std::uint64_t seed) {
  room.validate();
  if (!(duration > 0.0)) throw ConfigError("trajectory duration must be positive");
  const auto frames = static_cast<std::size_t>(std::max(1.0, std::round(duration * kPoseRate)));
  const double dt = 1.0 / kPoseRate;
  const double alpha = std::exp(-dt / kWalkTimeConstant);
  const double drive = kWalkSpeedSpread * std::sqrt(1.0 - alpha * alpha);
  const double lo = kWalkMargin, hi = room.width - kWalkMargin;
  const double z_mid = room.height / 2, z_amp = std::min(kWobble, room.height / 2);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(lo, hi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Pose pose;
  pose.rx_pos = room.center();
  do {
    pose.tx_pos = {uni(rng), uni(rng), z_mid};
  } while ((pose.tx_pos - pose.rx_pos).head<2>().norm() < 0.5);

  Eigen::Vector3d vel = Eigen::Vector3d::Zero();
  double yaw = std::uniform_real_distribution<double>(-kPi, kPi)(rng);
  PoseTrack track;
  for (std::size_t i = 0; i < frames; ++i) {
    if (i > 0) {
      for (int k = 0; k < 3; ++k) vel[k] = alpha * vel[k] + drive * gauss(rng) * (k == 2 ? 0.1 : 1.0);
      const double speed = vel.norm();
      const double cap = kMaxWalkSpeed * (1.0 - 1e-9);
      if (speed > cap) vel *= cap / speed;
      Eigen::Vector3d next = pose.tx_pos + vel * dt;
      for (int k = 0; k < 2; ++k)
        if (next[k] < lo || next[k] > hi) {
          next[k] = std::clamp(next[k], lo, hi);
          vel[k] = -vel[k];
        }
      if (next.z() < z_mid - z_amp || next.z() > z_mid + z_amp) {
        next.z() = std::clamp(next.z(), z_mid - z_amp, z_mid + z_amp);
        vel.z() = -vel.z();
      }
      pose.tx_pos = next;
      if (vel.head<2>().norm() > 1e-6) yaw = std::atan2(vel.y(), vel.x());
    }
    pose.tx_rot = yaw_rotation(yaw);
    track.times.push_back(double(i) * dt);
    track.poses.push_back(pose);
  }
  return track;
}

Pose pose_at_azimuth(const RoomSpec& room, double azimuth_deg, double distance) {
  const double az = azimuth_deg * kPi / 180.0;
  Pose p;
  p.rx_pos = room.center();
  p.tx_pos = p.rx_pos + distance * Eigen::Vector3d(std::cos(az), std::sin(az), 0.0);
  p.tx_rot = yaw_rotation(az + kPi);
  return p;
}

double ear_distance(const Pose& pose, int ear) { return (pose.tx_pos - ear_position(pose, ear)).norm(); }

double ear_gain(const Pose& pose, int ear) {
  const Eigen::Vector3d axis = pose.rx_rot * Eigen::Vector3d(0.0, ear == 0 ? 1.0 : -1.0, 0.0);
  const Eigen::Vector3d to_src = pose.tx_pos - pose.rx_pos;
  const double n = to_src.norm();
  const double cos_angle = n > 0.0 ? axis.dot(to_src) / n : 0.0;
  const double shadow_db = -kShadowDb / 2 * (1.0 - cos_angle);
  return std::pow(10.0, shadow_db / 20.0) / std::max(ear_distance(pose, ear), kMinSourceDistance);
}

double analytic_itd_samples(const Pose& pose, double sample_rate) {
  return (ear_distance(pose, 1) - ear_distance(pose, 0)) / kSpeedOfSound * sample_rate;
}

std::vector<double> reverb_tail(double rt60, double sample_rate, std::uint64_t seed) {
  if (!(rt60 >= 0.0)) throw ConfigError("rt60 must be >= 0");
  if (rt60 == 0.0) return {};
  const double decay_samples = rt60 * sample_rate;
  const auto len = static_cast<std::size_t>(std::ceil(1.5 * decay_samples));
  const double amp = std::sqrt(kReverbTailEnergy * 6.0 * std::log(10.0) / decay_samples);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> tail(len);
  for (std::size_t i = 0; i < len; ++i) tail[i] = amp * gauss(rng) * std::pow(10.0, -3.0 * double(i + 1) / decay_samples);
  return tail;
}

double measure_rt60(const std::vector<double>& ir, double sample_rate) {
  std::vector<double> schroeder(ir.size());
  double acc = 0.0;
  for (std::size_t i = ir.size(); i-- > 0;) schroeder[i] = (acc += ir[i] * ir[i]);
  if (!(acc > 0.0)) throw NumericError("measure_rt60: impulse response has no energy");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ir.size(); ++i) {
    const double db = 10.0 * std::log10(schroeder[i] / acc);
    if (db > -5.0 || db < -35.0) continue;
    const double x = double(i);
    sx += x;
    sy += db;
    sxx += x * x;
    sxy += x * db;
    ++n;
  }
  if (n < 2) throw NumericError("measure_rt60: decay range -5..-35 dB not covered");
  const double slope = (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
  return -60.0 / slope / sample_rate;
}

double fractional_sample(const std::vector<double>& x, double position) {
  const auto base = static_cast<std::int64_t>(std::floor(position));
  double acc = 0.0;
  for (std::int64_t k = base - kSincHalfWidth + 1; k <= base + kSincHalfWidth; ++k) {
    if (k < 0 || k >= std::int64_t(x.size())) continue;
    const double u = position - double(k);
    const double sinc = u == 0.0 ? 1.0 : std::sin(kPi * u) / (kPi * u);
    const double window = 0.5 + 0.5 * std::cos(kPi * u / kSincHalfWidth);
    acc += x[std::size_t(k)] * sinc * window;
  }
  return acc;
}

RowMatrix<double> spatialize_oracle(const std::vector<double>& x, const PoseTrack& track, const RoomSpec& room,
                                    double sample_rate, const OracleSeeds& seeds) {
  room.validate();
  if (track.empty()) throw DataError("spatialize_oracle: empty pose track");
  const Index t_len = Index(x.size());
  const double audio_end = double(t_len) / sample_rate;
  if (track.times.front() > 1e-9 || track.times.back() + 1.0 / kPoseRate < audio_end - 1e-9)
    throw DataError("spatialize_oracle: pose track covers " + std::to_string(track.times.back() + 1.0 / kPoseRate) +
                    " s but audio lasts " + std::to_string(audio_end) + " s");

  RowMatrix<double> out(2, t_len);
  for (Index t = 0; t < t_len; ++t) {
    const Pose p = interpolate_pose(track, double(t) / sample_rate);
    for (int ear = 0; ear < 2; ++ear) {
      const double delay = ear_distance(p, ear) / kSpeedOfSound * sample_rate;
      out(ear, t) = ear_gain(p, ear) * fractional_sample(x, double(t) - delay);
    }
  }

  const std::vector<double> tail = reverb_tail(room.rt60, sample_rate, seeds.reverb);
  for (int ear = 0; ear < 2 && !tail.empty(); ++ear) {
    const std::vector<double> dry(out.row(ear).data(), out.row(ear).data() + t_len);
    const std::vector<double> wet = convolve(dry, tail);
    for (Index t = 1; t < t_len; ++t) out(ear, t) += wet[std::size_t(t - 1)];
  }

  if (std::isfinite(room.noise_floor_db)) {
    const double rms = std::pow(10.0, room.noise_floor_db / 20.0);
    std::mt19937_64 rng(seeds.noise);
    std::normal_distribution<double> gauss(0.0, rms);
    for (int ear = 0; ear < 2; ++ear)
      for (Index t = 0; t < t_len; ++t) out(ear, t) += gauss(rng);
  }
  return out;
}

std::vector<double> synth_source(Index num_samples, double sample_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> x(std::size_t(num_samples), 0.0);
  for (int voice = 0; voice < 3; ++voice) {
    const double f0 = 110.0 + 220.0 * uni(rng);
    const double glide_rate = 0.2 + 0.6 * uni(rng), glide_phase = 2 * kPi * uni(rng);
    const double am_rate = 2.0 + 4.0 * uni(rng), am_phase = 2 * kPi * uni(rng);
    double phase = 2 * kPi * uni(rng);
    for (Index t = 0; t < num_samples; ++t) {
      const double time = double(t) / sample_rate;
      const double f = f0 * (1.0 + 0.1 * std::sin(2 * kPi * glide_rate * time + glide_phase));
      const double env = 0.55 + 0.45 * std::sin(2 * kPi * am_rate * time + am_phase);
      double s = 0.0;
      for (int k = 1; k <= 8 && double(k) * f < 0.45 * sample_rate; ++k) s += std::sin(double(k) * phase) / k;
      x[std::size_t(t)] += env * s;
      phase = std::fmod(phase + 2 * kPi * f / sample_rate, 2 * kPi);
    }
  }
  for (double& v : x) v += 0.02 * gauss(rng);
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : x) v *= 0.5 / peak;
  return x;
}

Index interaural_lag(const RowMatrix<double>& stereo, Index max_lag) {
  if (stereo.rows() != 2) throw ShapeError("interaural_lag expects 2 channels");
  const Index n = stereo.cols();
  Index best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (Index lag = -max_lag; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (Index t = std::max<Index>(0, -lag); t < std::min(n, n - lag); ++t) acc += stereo(0, t) * stereo(1, t + lag);
    if (acc > best_val || (acc == best_val && std::abs(lag) < std::abs(best))) {
      best_val = acc;
      best = lag;
    }
  }
  return best;
}

double interaural_level_db(const RowMatrix<double>& stereo) {
  if (stereo.rows() != 2) throw ShapeError("interaural_level_db expects 2 channels");
  const double floor = 1e-12;
  const double l = std::max(std::sqrt(stereo.row(0).squaredNorm() / double(stereo.cols())), floor);
  const double r = std::max(std::sqrt(stereo.row(1).squaredNorm() / double(stereo.cols())), floor);
  return 20.0 * std::log10(l / r);
}

}  // namespace bnc
