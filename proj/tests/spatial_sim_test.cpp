#include <cmath>
#include <random>

#include "bnc/binauralizer.hpp"
#include "bnc/error.hpp"
#include "bnc/spatial_sim.hpp"
#include "doctest.h"

using namespace bnc;

namespace {

RowMatrix<double> render_static(const std::vector<double>& x, const Pose& pose, const RoomSpec& room, double sr,
                                std::uint64_t seed = 1) {
  const double dur = double(x.size()) / sr;
  return spatialize_oracle(x, PoseTrack::constant(pose, dur), room, sr, OracleSeeds::from_clip_seed(seed));
}

}  // namespace

TEST_CASE("room spec") {
  CHECK_NOTHROW(RoomSpec{}.validate());
  CHECK_NOTHROW(RoomSpec::anechoic().validate());
  CHECK_THROWS_AS((RoomSpec{0.0, 2.4, 0.3, -60}.validate()), ConfigError);
  CHECK_THROWS_AS((RoomSpec{4.6, 2.4, -0.1, -60}.validate()), ConfigError);
  CHECK_THROWS_AS((RoomSpec{4.6, 2.4, 0.3, 3.0}.validate()), ConfigError);
  CHECK(RoomSpec{}.center() == Eigen::Vector3d(2.3, 2.3, 1.2));
}

TEST_CASE("trajectory generator") {
  const RoomSpec room;
  const PoseTrack track = gen_trajectory(room, 1.0, 11);
  REQUIRE(track.size() == 240);
  for (std::size_t i = 0; i < track.size(); ++i) CHECK(track.times[i] == doctest::Approx(double(i) / 240).epsilon(1e-15));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PoseTrack t = gen_trajectory(room, 5.0, seed);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const Pose& p = t.poses[i];
      CHECK(room.contains(p.tx_pos));
      CHECK(p.rx_pos == room.center());
      CHECK(p.rx_rot.coeffs() == Eigen::Quaterniond::Identity().coeffs());
      CHECK(std::abs(p.tx_rot.norm() - 1.0) < 1e-12);
      if (i > 0) {
        const Eigen::Vector3d step = p.tx_pos - t.poses[i - 1].tx_pos;
        CHECK(step.norm() <= kMaxWalkSpeed / kPoseRate + 1e-12);
      }
    }
  }

  SUBCASE("orientation faces the walking direction") {
    const PoseTrack t = gen_trajectory(room, 5.0, 3);
    int aligned = 0, moving = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
      const Eigen::Vector3d step = t.poses[i].tx_pos - t.poses[i - 1].tx_pos;
      if (step.head<2>().norm() < 1e-4) continue;
      ++moving;
      const Eigen::Vector3d facing = t.poses[i].tx_rot * Eigen::Vector3d::UnitX();
      if (facing.head<2>().dot(step.head<2>()) > 0) ++aligned;
    }
    CHECK(moving > 100);
    CHECK(aligned >= moving * 9 / 10);
  }
  SUBCASE("seeded") {
    const PoseTrack a = gen_trajectory(room, 1.0, 5), b = gen_trajectory(room, 1.0, 5), c = gen_trajectory(room, 1.0, 6);
    CHECK(a.poses.back().tx_pos == b.poses.back().tx_pos);
    CHECK(a.poses.back().tx_pos != c.poses.back().tx_pos);
  }
  CHECK_THROWS_AS(gen_trajectory(room, 0.0, 1), ConfigError);
}

TEST_CASE("fractional delay kernel") {
  std::vector<double> x(64);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (double& v : x) v = g(rng);
  for (int k = 0; k < 64; ++k) CHECK(std::abs(fractional_sample(x, double(k)) - x[std::size_t(k)]) < 1e-14);
  CHECK(fractional_sample(x, -40.0) == 0.0);
  CHECK(fractional_sample(x, 200.0) == 0.0);
}

TEST_CASE("oracle geometry at 48 kHz") {
  const double sr = 48000;
  const RoomSpec room = RoomSpec::anechoic();
  const std::vector<double> x = synth_source(9600, sr, 21);

  SUBCASE("median plane is symmetric") {
    for (double az : {0.0, 180.0}) {
      const RowMatrix<double> y = render_static(x, pose_at_azimuth(room, az, 1.0), room, sr);
      CHECK((y.row(0) - y.row(1)).cwiseAbs().maxCoeff() < 1e-9);
    }
    RoomSpec reverberant = room;
    reverberant.rt60 = 0.2;
    const RowMatrix<double> y = render_static(x, pose_at_azimuth(room, 0.0, 1.0), reverberant, sr);
    CHECK((y.row(0) - y.row(1)).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("measured ITD matches the geometric delay") {
    for (double az : {-90.0, 0.0, 90.0}) {
      const Pose pose = pose_at_azimuth(room, az, 0.5);
      const RowMatrix<double> y = render_static(x, pose, room, sr);
      const double expected = analytic_itd_samples(pose, sr);
      CAPTURE(az);
      CHECK(std::abs(double(interaural_lag(y, 64)) - expected) <= 1.0);
      if (az > 0) CHECK(expected > 20.0);
      if (az < 0) CHECK(expected < -20.0);
    }
  }
  SUBCASE("swapping the azimuth sign swaps the ears") {
    RoomSpec reverberant = room;
    reverberant.rt60 = 0.2;
    for (double az : {30.0, 90.0, 135.0}) {
      const RowMatrix<double> a = render_static(x, pose_at_azimuth(room, az, 0.8), reverberant, sr);
      const RowMatrix<double> b = render_static(x, pose_at_azimuth(room, -az, 0.8), reverberant, sr);
      CHECK((a.row(0) - b.row(1)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((a.row(1) - b.row(0)).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("energy ratio follows the gain model") {
    for (double az : {-90.0, 45.0, 90.0}) {
      const Pose pose = pose_at_azimuth(room, az, 1.3);
      const RowMatrix<double> y = render_static(x, pose, room, sr);
      const Index skip = 400, n = y.cols() - 2 * skip;
      const double ratio = y.row(0).segment(skip, n).squaredNorm() / y.row(1).segment(skip, n).squaredNorm();
      const double expected = std::pow(ear_gain(pose, 0) / ear_gain(pose, 1), 2);
      CAPTURE(az);
      CHECK(std::abs(ratio / expected - 1.0) < 1e-3);
    }
    const Pose lateral = pose_at_azimuth(room, 90.0, 2.0);
    CHECK(20 * std::log10(ear_gain(lateral, 0) / ear_gain(lateral, 1)) ==
          doctest::Approx(kShadowDb + 20 * std::log10(ear_distance(lateral, 1) / ear_distance(lateral, 0))));
  }
  SUBCASE("linear in the source without a noise floor") {
    RoomSpec reverberant = room;
    reverberant.rt60 = 0.25;
    const PoseTrack track = gen_trajectory(room, 0.2, 4);
    std::vector<double> x2(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) x2[i] = -2.5 * x[i];
    const OracleSeeds seeds = OracleSeeds::from_clip_seed(9);
    const RowMatrix<double> a = spatialize_oracle(x, track, reverberant, sr, seeds);
    const RowMatrix<double> b = spatialize_oracle(x2, track, reverberant, sr, seeds);
    CHECK((b + 2.5 * a).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("reverb and noise floor") {
  for (double sr : {8000.0, 48000.0})
    for (double rt60 : {0.2, 0.3, 0.8})
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const std::vector<double> tail = reverb_tail(rt60, sr, seed);
        CAPTURE(sr);
        CAPTURE(rt60);
        CHECK(std::abs(measure_rt60(tail, sr) / rt60 - 1.0) < 0.1);
        std::vector<double> ir{1.0};
        ir.insert(ir.end(), tail.begin(), tail.end());
        CHECK(std::abs(measure_rt60(ir, sr) / rt60 - 1.0) < 0.1);
      }
  CHECK(reverb_tail(0.0, 8000, 1).empty());

  SUBCASE("noise floor level and seeding") {
    RoomSpec room = RoomSpec::anechoic();
    room.noise_floor_db = -40;
    const std::vector<double> silence(20000, 0.0);
    const Pose pose = pose_at_azimuth(room, 30.0, 1.0);
    const RowMatrix<double> y = render_static(silence, pose, room, 8000, 3);
    const double rms = std::sqrt(y.squaredNorm() / double(y.size()));
    CHECK(rms == doctest::Approx(0.01).epsilon(0.03));
    CHECK(render_static(silence, pose, room, 8000, 3) == y);
    CHECK((render_static(silence, pose, room, 8000, 4) - y).cwiseAbs().maxCoeff() > 0.0);
  }
  SUBCASE("track must cover the audio") {
    const RoomSpec room = RoomSpec::anechoic();
    const std::vector<double> x(8000, 0.1);
    const PoseTrack short_track = PoseTrack::constant(pose_at_azimuth(room, 0, 1), 0.5);
    CHECK_THROWS_AS(spatialize_oracle(x, short_track, room, 8000, {}), DataError);
    CHECK_NOTHROW(spatialize_oracle(x, gen_trajectory(room, 1.0, 1), room, 8000, {}));
  }
}

TEST_CASE("interaural analysis") {
  RowMatrix<double> s = RowMatrix<double>::Zero(2, 200);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (Index t = 0; t < 190; ++t) {
    s(0, t) = g(rng);
    s(1, t + 7) = 0.5 * s(0, t);
  }
  CHECK(interaural_lag(s, 20) == 7);
  CHECK(interaural_level_db(s) == doctest::Approx(20 * std::log10(2.0)).epsilon(1e-2));
  RowMatrix<double> swapped(2, 200);
  swapped.row(0) = s.row(1);
  swapped.row(1) = s.row(0);
  CHECK(interaural_lag(swapped, 20) == -7);
}

TEST_CASE("synthetic source") {
  const std::vector<double> a = synth_source(4000, 8000, 1), b = synth_source(4000, 8000, 1);
  CHECK(a == b);
  double peak = 0;
  for (double v : a) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.5));
  CHECK(synth_source(4000, 8000, 2) != a);
}
