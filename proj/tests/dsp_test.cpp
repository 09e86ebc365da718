#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "bnc/dsp.hpp"
#include "bnc/error.hpp"
#include "bnc/grad_check.hpp"
#include "bnc/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bnc;
using bnc::testing::random_tensor;
using T = Tensord;

namespace {

// Direct DFT of one Hann-windowed frame, computed independently with std::complex.
std::vector<std::complex<double>> naive_dft(const T& x, Index start, Index n) {
  std::vector<std::complex<double>> out;
  for (Index k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (Index t = 0; t < n; ++t) {
      const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * t / n);
      acc += w * x[start + t] * std::polar(1.0, -2 * std::numbers::pi * double(k) * double(t) / double(n));
    }
    out.push_back(acc);
  }
  return out;
}

T sine(Index len, double freq, double sr, double amp = 1.0) {
  Array<double> v(len);
  for (Index i = 0; i < len; ++i) v[i] = amp * std::sin(2 * std::numbers::pi * freq * double(i) / sr);
  return T({len}, v);
}

}  // namespace

TEST_CASE("stft") {
  const StftConfig cfg{.fft_size = 256, .hop = 64};
  SUBCASE("zero signal") {
    const auto s = stft(T::zeros({1024}), cfg);
    CHECK(s.magnitude.dim(0) == cfg.frames(1024));
    CHECK(s.magnitude.data().abs().maxCoeff() == 0.0);
  }
  SUBCASE("bin-centred sine peaks at its bin") {
    const Index k = 20;
    const auto s = stft(sine(1024, k * 8000.0 / 256, 8000.0), cfg);
    const auto oracle = naive_dft(sine(1024, k * 8000.0 / 256, 8000.0), 0, 256);
    const Index bins = cfg.bins();
    for (Index f = 0; f < s.magnitude.dim(0); ++f) {
      const double peak = s.magnitude[f * bins + k];
      for (Index j = 0; j < bins; ++j) {
        if (j == k) continue;
        const double db = 20 * std::log10(peak / std::max(s.magnitude[f * bins + j], 1e-300));
        if (std::abs(j - k) >= 2) {
          CHECK(db >= 20.0);
        } else {
          // Hann main lobe: the direct DFT puts the neighbours 6.02 dB down.
          const double ref = 20 * std::log10(std::abs(oracle[std::size_t(k)]) / std::abs(oracle[std::size_t(j)]));
          CHECK(db == doctest::Approx(ref).epsilon(1e-6));
          CHECK(db > 6.0);
        }
      }
    }
  }
  SUBCASE("matches direct DFT on random signal") {
    std::mt19937_64 rng(1);
    const T x = random_tensor({2048}, rng);
    const StftConfig big{.fft_size = 512, .hop = 256};
    const auto s = stft(x, big);
    for (Index f = 0; f < s.magnitude.dim(0); ++f) {
      const auto ref = naive_dft(x, f * big.hop, big.fft_size);
      for (Index k = 0; k < big.bins(); ++k) {
        CHECK(std::abs(s.magnitude[f * big.bins() + k] - std::abs(ref[std::size_t(k)])) < 1e-9);
        if (std::abs(ref[std::size_t(k)]) > 1e-6)
          CHECK(std::abs(s.phase[f * big.bins() + k] - std::arg(ref[std::size_t(k)])) < 1e-9);
      }
    }
  }
  SUBCASE("parseval per frame") {
    std::mt19937_64 rng(2);
    const T x = random_tensor({512}, rng);
    const auto mag = stft_magnitude(x, cfg);
    const Array<double> w = hann_window(256);
    for (Index f = 0; f < mag.dim(0); ++f) {
      double spec = 0;
      for (Index k = 0; k < cfg.bins(); ++k) {
        const double m = mag[f * cfg.bins() + k];
        spec += (k == 0 || k == cfg.bins() - 1 ? 1.0 : 2.0) * m * m;
      }
      const double frame = (x.data().segment(f * cfg.hop, 256) * w).square().sum();
      CHECK(spec / 256.0 == doctest::Approx(frame).epsilon(1e-6));
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(stft(T::zeros({100}), cfg), ShapeError);
    CHECK_THROWS_AS(stft(T::zeros({1024}), StftConfig{.fft_size = 300, .hop = 64}), ConfigError);
  }
  SUBCASE("gradients through magnitude and phase") {
    std::mt19937_64 rng(3);
    const T x = random_tensor({96}, rng);
    const StftConfig small{.fft_size = 32, .hop = 16};
    CHECK(grad_check<double>([&](const T& in) { return sum(stft(in, small).magnitude); }, x, 1e-6) < 1e-4);
    CHECK(grad_check<double>([&](const T& in) { return sum(sin(stft(in, small).phase)); }, x, 1e-6) < 1e-4);
  }
}

TEST_CASE("mel spectrogram") {
  const StftConfig cfg{.fft_size = 256, .hop = 64};
  const MelConfig mel{.n_mels = 40, .sample_rate = 8000.0};
  mel.validate(cfg);
  SUBCASE("zero signal sits at the floor") {
    const T m = mel_spectrogram(T::zeros({512}), cfg, mel);
    CHECK(m.dim(1) == 40);
    CHECK((m.data() - std::log(1e-5)).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("deterministic") {
    const T x = sine(512, 440, 8000);
    CHECK((mel_spectrogram(x, cfg, mel).data() == mel_spectrogram(x, cfg, mel).data()).all());
  }
  SUBCASE("1 kHz lands in the band spanning 1 kHz") {
    const T m = mel_spectrogram(sine(1024, 1000, 8000), cfg, mel);
    // Band m spans [center(m-1), center(m+1)] on the HTK scale.
    const double lo = hz_to_mel(0), hi = hz_to_mel(4000);
    auto edge = [&](Index i) { return mel_to_hz(lo + (hi - lo) * double(i) / 41.0); };
    for (Index f = 0; f < m.dim(0); ++f) {
      Index best = 0;
      for (Index b = 1; b < 40; ++b)
        if (m[f * 40 + b] > m[f * 40 + best]) best = b;
      CHECK(edge(best) < 1000.0);
      CHECK(edge(best + 2) > 1000.0);
    }
    const auto centers = mel_center_frequencies(mel);
    CHECK(centers.size() == 40);
  }
  SUBCASE("monotone in input energy") {
    std::mt19937_64 rng(4);
    const T x = random_tensor({512}, rng);
    const T a = mel_spectrogram(x, cfg, mel), b = mel_spectrogram(x * 2.0, cfg, mel);
    CHECK((b.data() >= a.data()).all());
  }
  SUBCASE("empty filters rejected") {
    CHECK_THROWS_AS((MelConfig{.n_mels = 200, .sample_rate = 8000.0}.validate(cfg)), ConfigError);
    CHECK_THROWS_AS((MelConfig{.f_min = 5000, .sample_rate = 8000.0}.validate(cfg)), ConfigError);
  }
  SUBCASE("gradient") {
    std::mt19937_64 rng(5);
    const T x = random_tensor({96}, rng);
    const StftConfig small{.fft_size = 32, .hop = 16};
    const MelConfig m8{.n_mels = 6, .sample_rate = 8000.0, .log_floor = 1e-5};
    CHECK(grad_check<double>([&](const T& in) { return sum(mel_spectrogram(in, small, m8)); }, x, 1e-6) < 1e-4);
  }
}

TEST_CASE("downsample_avg") {
  const T x = T::from({1, 4}, {1, 3, 5, 7});
  CHECK((downsample_avg(x, 1).data() == x.data()).all());
  const T d2 = downsample_avg(x, 2);
  CHECK(d2.shape() == Shape{1, 2});
  CHECK(d2[0] == 2.0);
  CHECK(d2[1] == 6.0);
  const T c = downsample_avg(T::full({2, 16}, 0.25), 4);
  CHECK(c.shape() == Shape{2, 4});
  CHECK((c.data() == 0.25).all());
  CHECK(downsample_avg(T::ones({1, 5}), 4).dim(1) == 2);

  std::mt19937_64 rng(6);
  const T r = random_tensor({3, 13}, rng);
  const T swapped = concat<double>({slice(r, 0, 2, 1), slice(r, 0, 0, 1), slice(r, 0, 1, 1)}, 0);
  const T a = downsample_avg(r, 4), b = downsample_avg(swapped, 4);
  CHECK((slice(a, 0, 2, 1).data() == slice(b, 0, 0, 1).data()).all());
  CHECK((slice(a, 0, 0, 1).data() == slice(b, 0, 1, 1).data()).all());
  CHECK(grad_check<double>([](const T& in) { return sum(square(downsample_avg(in, 2))); }, r, 1e-6) < 1e-4);
}

TEST_CASE("resample_condition") {
  Pose p;
  p.tx_pos = {1, 2, 0.5};
  p.rx_pos = {2.3, 2.3, 1.2};
  p.tx_rot = Eigen::Quaterniond(Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitZ()));
  SUBCASE("constant pose") {
    const T c = resample_condition<double>(PoseTrack::constant(p, 1.0), 50, 37.0);
    for (Index i = 1; i < 50; ++i)
      for (Index k = 0; k < kConditionDim; ++k) CHECK(c[i * kConditionDim + k] == c[k]);
    CHECK(c[0] == 1.0);
    CHECK(c[3] == doctest::Approx(std::cos(0.15)));
  }
  SUBCASE("midpoint of a two-sample track") {
    PoseTrack t;
    Pose q = p;
    q.tx_pos = {3, 0, 1.5};
    t.times = {0.0, 1.0 / kPoseRate};
    t.poses = {p, q};
    const T c = resample_condition<double>(t, 1, 1.0, 0.5 / kPoseRate);
    CHECK(c[0] == doctest::Approx(2.0));
    CHECK(c[1] == doctest::Approx(1.0));
    CHECK(c[2] == doctest::Approx(1.0));
  }
  SUBCASE("interpolated quaternions stay unit norm") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
      PoseTrack t;
      for (int i = 0; i < 10; ++i) {
        Pose r;
        r.tx_rot = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized();
        r.rx_rot = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized();
        t.times.push_back(i / kPoseRate);
        t.poses.push_back(r);
      }
      const T c = resample_condition<double>(t, 97, 2000.0);
      for (Index i = 0; i < 97; ++i)
        for (int off : {3, 10}) {
          double norm = 0;
          for (int k = 0; k < 4; ++k) norm += std::pow(c[i * kConditionDim + off + k], 2);
          CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
        }
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(resample_condition<double>(PoseTrack{}, 4, 10.0), DataError);
    PoseTrack bad = PoseTrack::constant(p, 0.1);
    bad.times[2] = bad.times[1];
    CHECK_THROWS_AS(resample_condition<double>(bad, 4, 10.0), DataError);
  }
}
