#include "bnc/dsp.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "bnc/error.hpp"
#include "bnc/ops.hpp"

namespace bnc {

namespace {

template <typename Scalar>
struct DftBasis {
  Tensor<Scalar> cos_t;  // [N x bins], window folded in
  Tensor<Scalar> sin_t;  // [N x bins], negated sine (e^{-i w n})
};

template <typename Scalar>
const DftBasis<Scalar>& dft_basis(Index n) {
  thread_local std::map<Index, DftBasis<Scalar>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const Index bins = n / 2 + 1;
  const Array<double> w = hann_window(n);
  Array<Scalar> c(n * bins), s(n * bins);
  for (Index t = 0; t < n; ++t)
    for (Index k = 0; k < bins; ++k) {
      // Reduce the angle index modulo n to keep the basis exact for large t*k.
      const double ang = 2.0 * std::numbers::pi * double((t * k) % n) / double(n);
      c[t * bins + k] = Scalar(w[t] * std::cos(ang));
      s[t * bins + k] = Scalar(-w[t] * std::sin(ang));
    }
  DftBasis<Scalar> b{Tensor<Scalar>({n, bins}, std::move(c)), Tensor<Scalar>({n, bins}, std::move(s))};
  return cache.emplace(n, std::move(b)).first->second;
}

template <typename Scalar>
const Tensor<Scalar>& mel_basis(const StftConfig& stft, const MelConfig& mel) {
  using Key = std::tuple<Index, Index, double, double, double>;
  thread_local std::map<Key, Tensor<Scalar>> cache;
  const Key key{stft.fft_size, mel.n_mels, mel.f_min, mel.upper(), mel.sample_rate};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const RowMatrix<double> fb = mel_filterbank(stft, mel);
  Array<Scalar> t(fb.size());
  Eigen::Map<RowMatrix<Scalar>>(t.data(), fb.cols(), fb.rows()) = fb.transpose().cast<Scalar>();
  return cache.emplace(key, Tensor<Scalar>({fb.cols(), fb.rows()}, std::move(t))).first->second;
}

template <typename Scalar>
void require_signal(const Tensor<Scalar>& x, const StftConfig& cfg) {
  cfg.validate();
  if (x.rank() != 1) throw ShapeError("stft: expected a 1-d signal, got " + to_string(x.shape()));
  if (x.numel() < cfg.fft_size)
    throw ShapeError("stft: signal of " + std::to_string(x.numel()) + " samples shorter than fft_size " +
                     std::to_string(cfg.fft_size));
}

}  // namespace

void StftConfig::validate() const {
  if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0)
    throw ConfigError("fft_size must be a power of two, got " + std::to_string(fft_size));
  if (hop < 1 || hop > fft_size) throw ConfigError("hop must lie in [1, fft_size]");
}

void MelConfig::validate(const StftConfig& stft) const {
  if (!(f_min >= 0.0 && f_min < upper() && upper() <= sample_rate / 2.0))
    throw ConfigError("mel range must satisfy 0 <= f_min < f_max <= sample_rate/2");
  if (!(log_floor > 0.0)) throw ConfigError("log_floor must be positive");
  if (n_mels < 1) throw ConfigError("n_mels must be positive");
  const RowMatrix<double> fb = mel_filterbank(stft, *this);
  for (Index m = 0; m < fb.rows(); ++m)
    if (!(fb.row(m).array() > 0.0).any())
      throw ConfigError("mel filter " + std::to_string(m) + " has no nonzero weight; reduce n_mels or grow fft_size");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Array<double> hann_window(Index n) {
  Array<double> w(n);
  for (Index i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(n));
  return w;
}

std::vector<double> mel_center_frequencies(const MelConfig& mel) {
  const double lo = hz_to_mel(mel.f_min), hi = hz_to_mel(mel.upper());
  std::vector<double> centers;
  for (Index m = 1; m <= mel.n_mels; ++m)
    centers.push_back(mel_to_hz(lo + (hi - lo) * double(m) / double(mel.n_mels + 1)));
  return centers;
}

RowMatrix<double> mel_filterbank(const StftConfig& stft, const MelConfig& mel) {
  const Index bins = stft.bins();
  const double lo = hz_to_mel(mel.f_min), hi = hz_to_mel(mel.upper());
  std::vector<double> edges;
  for (Index m = 0; m < mel.n_mels + 2; ++m) edges.push_back(mel_to_hz(lo + (hi - lo) * double(m) / double(mel.n_mels + 1)));
  RowMatrix<double> fb = RowMatrix<double>::Zero(mel.n_mels, bins);
  for (Index m = 0; m < mel.n_mels; ++m) {
    const double left = edges[std::size_t(m)], center = edges[std::size_t(m) + 1], right = edges[std::size_t(m) + 2];
    for (Index k = 0; k < bins; ++k) {
      const double f = double(k) * mel.sample_rate / double(stft.fft_size);
      double v = 0.0;
      if (f > left && f <= center) v = (f - left) / (center - left);
      else if (f > center && f < right) v = (right - f) / (right - center);
      fb(m, k) = v;
    }
  }
  return fb;
}

template <typename Scalar>
Tensor<Scalar> frame_signal(const Tensor<Scalar>& x, Index frame_len, Index hop) {
  const Index len = x.numel();
  if (len < frame_len) throw ShapeError("frame_signal: signal shorter than frame");
  const Index frames = (len - frame_len) / hop + 1;
  Array<Scalar> out(frames * frame_len);
  for (Index f = 0; f < frames; ++f) out.segment(f * frame_len, frame_len) = x.data().segment(f * hop, frame_len);
  return detail::make_result<Scalar>(Shape{frames, frame_len}, std::move(out), {&x},
                                     [x = x.node(), frames, frame_len, hop](const Array<Scalar>& g) {
                                       if (!x->requires_grad) return;
                                       auto& gx = x->grad_buffer();
                                       for (Index f = 0; f < frames; ++f)
                                         gx.segment(f * hop, frame_len) += g.segment(f * frame_len, frame_len);
                                     });
}

template <typename Scalar>
Spectrum<Scalar> stft(const Tensor<Scalar>& x, const StftConfig& cfg) {
  require_signal(x, cfg);
  const auto& basis = dft_basis<Scalar>(cfg.fft_size);
  const Tensor<Scalar> frames = frame_signal(x, cfg.fft_size, cfg.hop);
  const Tensor<Scalar> re = matmul(frames, basis.cos_t);
  const Tensor<Scalar> im = matmul(frames, basis.sin_t);
  return {sqrt(square(re) + square(im)), atan2(im, re)};
}

template <typename Scalar>
Tensor<Scalar> stft_magnitude(const Tensor<Scalar>& x, const StftConfig& cfg) {
  require_signal(x, cfg);
  const auto& basis = dft_basis<Scalar>(cfg.fft_size);
  const Tensor<Scalar> frames = frame_signal(x, cfg.fft_size, cfg.hop);
  return sqrt(square(matmul(frames, basis.cos_t)) + square(matmul(frames, basis.sin_t)));
}

template <typename Scalar>
Tensor<Scalar> mel_spectrogram(const Tensor<Scalar>& x, const StftConfig& stft_cfg, const MelConfig& mel) {
  const Tensor<Scalar> mag = stft_magnitude(x, stft_cfg);
  const Tensor<Scalar> energy = matmul(mag, mel_basis<Scalar>(stft_cfg, mel));
  return log(clamp_min(energy, Scalar(mel.log_floor)));
}

template <typename Scalar>
Tensor<Scalar> downsample_avg(const Tensor<Scalar>& x, Index factor) {
  if (factor != 1 && factor != 2 && factor != 4) throw ConfigError("downsample factor must be 1, 2 or 4");
  if (x.rank() != 2) throw ShapeError("downsample_avg: expected [C x T], got " + to_string(x.shape()));
  if (factor == 1) return x;
  const Index c = x.dim(0), len = x.dim(1);
  const Index padded = (len + factor - 1) / factor * factor;
  const Tensor<Scalar> p = pad(x, 1, 0, padded - len);
  return mean(reshape(p, {c, padded / factor, factor}), 2);
}

Pose interpolate_pose(const PoseTrack& track, double time) {
  if (track.empty()) throw DataError("pose track is empty");
  const auto& ts = track.times;
  if (time <= ts.front()) return track.poses.front();
  if (time >= ts.back()) return track.poses.back();
  const auto hi_it = std::upper_bound(ts.begin(), ts.end(), time);
  const std::size_t hi = static_cast<std::size_t>(hi_it - ts.begin()), lo = hi - 1;
  const double a = (time - ts[lo]) / (ts[hi] - ts[lo]);
  const Pose& p = track.poses[lo];
  const Pose& q = track.poses[hi];
  auto nlerp = [a](const Eigen::Quaterniond& u, Eigen::Quaterniond v) {
    if (u.coeffs() == v.coeffs()) return u;
    if (u.dot(v) < 0.0) v.coeffs() = -v.coeffs();
    Eigen::Quaterniond r;
    r.coeffs() = (1.0 - a) * u.coeffs() + a * v.coeffs();
    return r.normalized();
  };
  Pose out;
  out.tx_pos = p.tx_pos + a * (q.tx_pos - p.tx_pos);
  out.rx_pos = p.rx_pos + a * (q.rx_pos - p.rx_pos);
  out.tx_rot = nlerp(p.tx_rot, q.tx_rot);
  out.rx_rot = nlerp(p.rx_rot, q.rx_rot);
  return out;
}

PoseTrack PoseTrack::constant(const Pose& pose, double duration, double rate) {
  PoseTrack t;
  const auto n = static_cast<std::size_t>(std::ceil(duration * rate)) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    t.times.push_back(double(i) / rate);
    t.poses.push_back(pose);
  }
  return t;
}

template <typename Scalar>
Tensor<Scalar> resample_condition(const PoseTrack& track, Index target_len, double rate, double start_time) {
  if (track.empty()) throw DataError("resample_condition: empty pose track");
  if (track.times.size() != track.poses.size()) throw DataError("resample_condition: times/poses length mismatch");
  for (std::size_t i = 1; i < track.times.size(); ++i)
    if (!(track.times[i] > track.times[i - 1]))
      throw DataError("resample_condition: timestamps not strictly increasing at frame " + std::to_string(i));
  Array<Scalar> out(target_len * kConditionDim);
  for (Index i = 0; i < target_len; ++i) {
    const Pose p = interpolate_pose(track, start_time + double(i) / rate);
    Scalar* row = out.data() + i * kConditionDim;
    auto put_quat = [](Scalar* dst, const Eigen::Quaterniond& q) {
      dst[0] = Scalar(q.w());
      dst[1] = Scalar(q.x());
      dst[2] = Scalar(q.y());
      dst[3] = Scalar(q.z());
    };
    for (int k = 0; k < 3; ++k) row[k] = Scalar(p.tx_pos[k]);
    put_quat(row + 3, p.tx_rot);
    for (int k = 0; k < 3; ++k) row[7 + k] = Scalar(p.rx_pos[k]);
    put_quat(row + 10, p.rx_rot);
  }
  return Tensor<Scalar>({target_len, Index(kConditionDim)}, std::move(out));
}

#define BNC_INSTANTIATE_DSP(S)                                                                     \
  template Tensor<S> frame_signal(const Tensor<S>&, Index, Index);                                 \
  template Spectrum<S> stft(const Tensor<S>&, const StftConfig&);                                  \
  template Tensor<S> stft_magnitude(const Tensor<S>&, const StftConfig&);                          \
  template Tensor<S> mel_spectrogram(const Tensor<S>&, const StftConfig&, const MelConfig&);       \
  template Tensor<S> downsample_avg(const Tensor<S>&, Index);                                      \
  template Tensor<S> resample_condition<S>(const PoseTrack&, Index, double, double);

BNC_INSTANTIATE_DSP(float)
BNC_INSTANTIATE_DSP(double)

}  // namespace bnc
