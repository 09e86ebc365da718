#include <filesystem>
#include <random>
#include <unistd.h>

#include "bnc/dataset.hpp"
#include "doctest.h"

using namespace bnc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("bnc_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

template <typename Fn>
std::size_t parse_error_offset(Fn&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.offset();
  }
  FAIL("expected ParseError");
  return 0;
}

}  // namespace

TEST_CASE("wav codec") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  AudioBuffer a;
  a.sample_rate = 8000;
  a.samples.resize(2, 37);
  for (Index i = 0; i < a.samples.size(); ++i) a.samples.data()[i] = u(rng);
  const Bytes bytes = encode_wav(a);
  CHECK(bytes.size() == 44 + 2 * 37 * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RIFF");
  CHECK(bytes[20] == 3);  // IEEE float
  const AudioBuffer b = decode_wav(bytes);
  CHECK(b.sample_rate == 8000);
  CHECK(b.samples == a.samples);

  SUBCASE("tensor conversion keeps channel layout") {
    const Tensord t = a.tensor<double>();
    CHECK(t.shape() == Shape{2, 37});
    CHECK(t.data()[37 + 5] == double(a.samples(1, 5)));
    CHECK(AudioBuffer::from_tensor(t, 8000).samples == a.samples);
  }
  SUBCASE("16-bit pcm input") {
    Bytes pcm;
    ByteWriter w(pcm);
    w.str("RIFF");
    w.u32(36 + 4);
    w.str("WAVE");
    w.str("fmt ");
    w.u32(16);
    w.u16(1);
    w.u16(1);
    w.u32(16000);
    w.u32(32000);
    w.u16(2);
    w.u16(16);
    w.str("LIST");
    w.u32(3);
    w.str("abc");
    w.u8(0);
    w.str("data");
    w.u32(4);
    w.u16(16384);
    w.u16(static_cast<std::uint16_t>(-32768));
    const AudioBuffer m = decode_wav(pcm);
    CHECK(m.sample_rate == 16000);
    CHECK(m.samples(0, 0) == 0.5f);
    CHECK(m.samples(0, 1) == -1.0f);
  }
  SUBCASE("malformed input") {
    Bytes bad = bytes;
    bad[0] = 'X';
    CHECK(parse_error_offset([&] { decode_wav(bad); }) == 0);
    Bytes trunc(bytes.begin(), bytes.end() - 3);
    CHECK(parse_error_offset([&] { decode_wav(trunc); }) == 44);
    Bytes no_data(bytes.begin(), bytes.begin() + 36);
    CHECK(parse_error_offset([&] { decode_wav(no_data); }) == 36);
  }
}

TEST_CASE("pose csv") {
  const PoseTrack track = gen_trajectory(RoomSpec{}, 0.1, 3);
  const OracleSeeds seeds{123, 456};
  const std::string csv = format_pose_csv(track, seeds);
  const std::string header = csv.substr(0, csv.find('\n'));
  CHECK(std::count(header.begin(), header.end(), ',') + 1 == kPoseCsvColumns);
  CHECK(header.rfind("time_s,tx_x,tx_y,tx_z,tx_qw", 0) == 0);

  OracleSeeds back_seeds;
  const PoseTrack back = parse_pose_csv(csv, &back_seeds);
  CHECK(back_seeds == seeds);
  REQUIRE(back.size() == track.size());
  for (std::size_t i = 0; i < track.size(); ++i) {
    CHECK(back.times[i] == track.times[i]);
    CHECK((back.poses[i].tx_pos - track.poses[i].tx_pos).norm() < 1e-6);
    CHECK((back.poses[i].tx_rot.coeffs() - track.poses[i].tx_rot.coeffs()).norm() < 1e-6);
    CHECK((back.poses[i].rx_pos - track.poses[i].rx_pos).norm() < 1e-6);
  }

  SUBCASE("errors carry byte offsets") {
    const std::size_t row2 = csv.find('\n', csv.find('\n') + 1) + 1;
    std::string bad = csv;
    const std::size_t field = bad.find(',', row2) + 1;
    bad.replace(field, 1, "x");
    CHECK(parse_error_offset([&] { parse_pose_csv(bad); }) == field);

    std::string short_row = csv;
    short_row.insert(row2, "0,1,2\n");
    CHECK(parse_error_offset([&] { parse_pose_csv(short_row); }) == row2);

    CHECK(parse_error_offset([&] { parse_pose_csv("time_s,nope\n"); }) == 0);
    CHECK(parse_error_offset([&] { parse_pose_csv(""); }) == 0);

    const std::string first = csv.substr(csv.find('\n') + 1, row2 - csv.find('\n') - 1);
    const std::string dup = header + "\n" + first + first;
    CHECK(parse_error_offset([&] { parse_pose_csv(dup); }) == header.size() + 1 + first.size());
  }
}

TEST_CASE("manifest") {
  const std::vector<ManifestRow> rows{{"a", "a_mono.wav", "a_binaural.wav", "a_pose.csv", 0.3, -60, 7},
                                      {"b", "b_mono.wav", "", "", 0.0, -INFINITY, 8}};
  const std::string text = format_manifest(rows);
  const auto back = parse_manifest(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].pose_csv == "a_pose.csv");
  CHECK(back[1].binaural_wav.empty());
  CHECK(std::isinf(back[1].noise_db));
  CHECK(back[1].seed == 8);

  const std::string head = manifest_header() + "\n";
  CHECK(parse_error_offset([&] { parse_manifest(head + "a,m.wav,b.wav,,0,0,1\n"); }) == head.size() + 8);
  CHECK(parse_error_offset([&] { parse_manifest(head + "a,m.wav,,,zero,0,1\n"); }) == head.size() + 10);
  CHECK(parse_error_offset([&] { parse_manifest(head + "a,m.wav,,,0,0,1\na,n.wav,,,0,0,2\n"); }) ==
        head.size() + 16);
  CHECK(parse_error_offset([&] { parse_manifest(head + "a,m.wav\n"); }) == head.size());
}

TEST_CASE("dataset round trip") {
  TempDir tmp("dataset");
  const RoomSpec room;
  std::vector<ClipRecord> clips;
  clips.push_back(make_synthetic_clip("c0", room, 0.25, 8000, 1));
  clips.push_back(make_synthetic_clip("c1", room, 0.25, 8000, 2, pose_at_azimuth(room, 90, 1.0)));
  ClipRecord mono_only = clips[0];
  mono_only.id = "m0";
  mono_only.binaural.reset();
  mono_only.track = {};
  clips.push_back(mono_only);

  const auto rows = write_dataset(tmp.path.string(), clips);
  const Dataset ds = read_dataset(tmp.path.string());
  CHECK(ds.size() == clips.size());
  CHECK_FALSE(ds.all_binaural());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const ClipRecord c = ds.load(i);
    CHECK(c.id == clips[i].id);
    CHECK(c.seed == clips[i].seed);
    CHECK(c.mono.samples == clips[i].mono.samples);
    CHECK(c.has_binaural() == clips[i].has_binaural());
    if (c.has_binaural()) {
      CHECK(c.binaural->samples == clips[i].binaural->samples);
      CHECK(c.track.size() == clips[i].track.size());
      CHECK((c.track.poses.back().tx_pos - clips[i].track.poses.back().tx_pos).norm() < 1e-6);
    }
    CHECK(c.room.rt60 == room.rt60);
  }

  SUBCASE("synthesis is deterministic") {
    const ClipRecord again = make_synthetic_clip("c0", room, 0.25, 8000, 1);
    CHECK(again.binaural->samples == clips[0].binaural->samples);
    CHECK(make_synthetic_clip("c0", room, 0.25, 8000, 3).mono.samples != clips[0].mono.samples);
  }
  SUBCASE("missing files name the path") {
    fs::remove(tmp.path / "c1_pose.csv");
    try {
      ds.load(1);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("c1_pose.csv") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(read_dataset((tmp.path / "nope").string()), DataError);
}
