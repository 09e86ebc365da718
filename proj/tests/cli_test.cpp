#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "bnc/dataset.hpp"
#include "bnc/spatial_sim.hpp"
#include "bnc/wire.hpp"
#include "cli.hpp"
#include "doctest.h"

using namespace bnc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("bnc_cli_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

// Dataset with three static azimuths plus a short pretrain and finetune.
struct Trained {
  TempDir dir{"trained"};
  Trained() {
    REQUIRE(cli({"synth-data", "--out", dir / "data", "--clips", "3", "--clip-seconds", "1", "--azimuths=-90,0,90",
                 "--seed", "3"})
                .code == 0);
    REQUIRE(cli({"train", "--stage", "pretrain", "--data", dir / "data", "--out", dir / "pre", "--steps", "5"}).code ==
            0);
    REQUIRE(cli({"train", "--data", dir / "data", "--out", dir / "ft", "--steps", "5", "--init",
                 dir / "pre/final.bnc"})
                .code == 0);
  }
  std::string ckpt() const { return dir / "ft/final.bnc"; }
};

AudioBuffer mono_noise(Index n, std::uint32_t sr) {
  AudioBuffer a;
  a.sample_rate = sr;
  a.samples = RowMatrix<float>::Random(1, n) * 0.3f;
  return a;
}

}  // namespace

TEST_CASE("exit codes") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"nonsense"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"decode", "--in", "x"}).code == kExitUsage);
  CHECK(cli({"synth-data", "--out", "/tmp/x", "--clips", "1", "--room", "cave"}).code == kExitUsage);
  CHECK(cli({"synth-data", "--out", "/tmp/x"}).code == kExitUsage);
  TempDir d("codes");
  const Run missing = cli({"encode", "--in", d / "none.wav", "--ckpt", d / "none.bnc", "--out", d / "o"});
  CHECK(missing.code == kExitData);
  CHECK(missing.err.find("none") != std::string::npos);
  CHECK(cli({"train", "--data", d / "none", "--out", d / "o", "--stage", "pretrain"}).code == kExitData);
  CHECK(cli({"train", "--data", d / "none", "--out", d / "o", "--set", "train.lr=-1"}).code == kExitUsage);
  CHECK(cli({"train", "--data", d / "none", "--out", d / "o", "--set", "nokey"}).code == kExitUsage);
}

TEST_CASE("synth-data determinism, seeding and hours arithmetic") {
  TempDir d("synth");
  REQUIRE(cli({"synth-data", "--out", d / "a", "--clips", "2", "--clip-seconds", "0.5", "--seed", "11"}).code == 0);
  REQUIRE(cli({"synth-data", "--out", d / "b", "--clips", "2", "--clip-seconds", "0.5", "--seed", "11"}).code == 0);
  REQUIRE(cli({"synth-data", "--out", d / "c", "--clips", "2", "--clip-seconds", "0.5", "--seed", "12"}).code == 0);
  setenv("BNC_SEED", "11", 1);
  REQUIRE(cli({"synth-data", "--out", d / "e", "--clips", "2", "--clip-seconds", "0.5"}).code == 0);
  unsetenv("BNC_SEED");
  for (const std::string f : {"clip0000_binaural.wav", "clip0001_mono.wav", "clip0001_pose.csv"}) {
    CHECK(read_file(d / ("a/" + f)) == read_file(d / ("b/" + f)));
    CHECK(read_file(d / ("a/" + f)) == read_file(d / ("e/" + f)));
    CHECK(read_file(d / ("a/" + f)) != read_file(d / ("c/" + f)));
  }

  REQUIRE(cli({"synth-data", "--out", d / "h", "--hours", "0.01", "--clip-seconds", "5", "--seed", "1"}).code == 0);
  const Dataset ds = Dataset::open(d / "h");
  const auto clips = ds.load_all();
  REQUIRE(clips.size() == 8);  // 36 s in clips of at most 5 s
  double total = 0;
  for (const auto& c : clips) {
    CHECK(c.mono.frames() == 36000);
    total += double(c.mono.frames()) / 8000.0;
  }
  CHECK(total == doctest::Approx(36.0));
}

TEST_CASE("codec commands") {
  Trained t;
  const TempDir d("codec");
  write_wav(d / "in.wav", mono_noise(4001, 8000));
  const Run enc = cli({"encode", "--in", d / "in.wav", "--ckpt", t.ckpt(), "--out", d / "c.bits"});
  REQUIRE(enc.code == 0);
  const CodeGrid codes = unpack(read_file(d / "c.bits"));
  CHECK(codes.frames() == 1001);
  CHECK(enc.out.find("4004") != std::string::npos);

  const std::string pose = t.dir / "data/clip0000_pose.csv";
  REQUIRE(cli({"decode", "--in", d / "c.bits", "--pose", pose, "--ckpt", t.ckpt(), "--out", d / "full.wav"}).code == 0);
  CHECK(read_wav(d / "full.wav").frames() == 4004);
  CHECK(read_wav(d / "full.wav").channels() == 2);
  REQUIRE(cli({"decode", "--in", d / "c.bits", "--pose", pose, "--ckpt", t.ckpt(), "--out", d / "cut.wav", "--samples",
               "4001"})
              .code == 0);
  CHECK(read_wav(d / "cut.wav").frames() == 4001);

  SUBCASE("stream equals binauralize") {
    REQUIRE(cli({"binauralize", "--in", d / "in.wav", "--pose", pose, "--ckpt", t.ckpt(), "--out", d / "b.wav"}).code ==
            0);
    REQUIRE(cli({"stream", "--in", d / "in.wav", "--pose", pose, "--ckpt", t.ckpt(), "--out", d / "s.wav"}).code == 0);
    REQUIRE(cli({"stream", "--in", d / "in.wav", "--pose", pose, "--ckpt", t.ckpt(), "--out", d / "tcp.wav",
                 "--endpoint", "tcp://127.0.0.1:0"})
                .code == 0);
    CHECK(read_file(d / "b.wav") == read_file(d / "s.wav"));
    CHECK(read_file(d / "b.wav") == read_file(d / "tcp.wav"));
    CHECK(read_file(d / "b.wav") == read_file(d / "cut.wav"));
  }
  SUBCASE("incompatible bitstream") {
    CodeGrid other = codes;
    other.fingerprint.codebook_size = 32;
    write_file(d / "other.bits", pack(other));
    const Run r = cli({"decode", "--in", d / "other.bits", "--pose", pose, "--ckpt", t.ckpt(), "--out", d / "x.wav"});
    CHECK(r.code == kExitData);
    CHECK(r.err.find("incompatible") != std::string::npos);
    Bytes cut = read_file(d / "c.bits");
    cut.resize(cut.size() - 1);
    write_file(d / "cut.bits", cut);
    CHECK(cli({"decode", "--in", d / "cut.bits", "--pose", pose, "--ckpt", t.ckpt(), "--out", d / "x.wav"}).code ==
          kExitData);
  }
  SUBCASE("wrong input format") {
    AudioBuffer stereo = mono_noise(800, 8000);
    stereo.samples = RowMatrix<float>::Random(2, 800);
    write_wav(d / "st.wav", stereo);
    CHECK(cli({"encode", "--in", d / "st.wav", "--ckpt", t.ckpt(), "--out", d / "x"}).code == kExitData);
    write_wav(d / "hi.wav", mono_noise(800, 16000));
    CHECK(cli({"encode", "--in", d / "hi.wav", "--ckpt", t.ckpt(), "--out", d / "x"}).code == kExitData);
  }
}

TEST_CASE("eval") {
  const TempDir d("eval");
  REQUIRE(cli({"synth-data", "--out", d / "data", "--clips", "2", "--clip-seconds", "1", "--azimuths", "90",
               "--room", "anechoic", "--seed", "2"})
              .code == 0);
  fs::create_directories(d / "ref");
  fs::create_directories(d / "swap");
  for (const std::string id : {"clip0000", "clip0001"}) {
    AudioBuffer a = read_wav(d / ("data/" + id + "_binaural.wav"));
    write_wav(d / ("ref/" + id + ".wav"), a);
    a.samples.row(0).swap(a.samples.row(1));
    write_wav(d / ("swap/" + id + ".wav"), a);
  }
  const Run same = cli({"eval", "--pred", d / "ref", "--ref", d / "ref", "--out", d / "report.csv"});
  REQUIRE(same.code == 0);
  CHECK(same.out.find("mean,0,0,0,0") != std::string::npos);
  const Bytes report = read_file(d / "report.csv");
  CHECK(std::string(report.begin(), report.end()) == same.out);

  SUBCASE("one inverted channel changes the waveform but not the mel grid") {
    const AudioBuffer ref = read_wav(d / "ref/clip0000.wav");
    AudioBuffer inv = ref;
    inv.samples.row(1) *= -1.0f;
    const EvalRow r = eval_pair("inv", inv, ref);
    CHECK(r.wave_l2 > 0);
    CHECK(r.mel_l2 < 1e-12);
  }
  SUBCASE("oracle renders with different noise seeds differ") {
    const RoomSpec room;
    const std::vector<double> x = synth_source(8000, 8000, 5);
    const PoseTrack track = PoseTrack::constant(pose_at_azimuth(room, 30, 1.0), 1.0);
    auto render = [&](std::uint64_t noise) {
      OracleSeeds seeds = OracleSeeds::from_clip_seed(1);
      seeds.noise = noise;
      return AudioBuffer::from_matrix(spatialize_oracle(x, track, room, 8000, seeds), 8000);
    };
    const EvalRow same = eval_pair("same", render(1), render(1));
    const EvalRow diff = eval_pair("diff", render(1), render(2));
    CHECK(same.wave_l2 == 0.0);
    CHECK(diff.wave_l2 > 0.0);
  }

  const EvalReport swapped = eval_dirs(d / "swap", d / "ref");
  REQUIRE(swapped.rows.size() == 2);
  CHECK(swapped.mean.wave_l2 > 0);
  CHECK(swapped.mean.itd_err_samples >= 2);
  CHECK(swapped.mean.ild_err_db > 1);
  CHECK(swapped.mean.mel_l2 > 0);

  fs::remove(d / "swap/clip0001.wav");
  const Run unmatched = cli({"eval", "--pred", d / "swap", "--ref", d / "ref"});
  CHECK(unmatched.code == kExitData);
  CHECK(unmatched.err.find("clip0001") != std::string::npos);
}

TEST_CASE("spectrogram") {
  const TempDir d("spec");
  AudioBuffer sine;
  sine.sample_rate = 8000;
  sine.samples.resize(1, 4096);
  for (Index i = 0; i < 4096; ++i) sine.samples(0, i) = float(0.5 * std::sin(2 * M_PI * 1000.0 * double(i) / 8000.0));
  write_wav(d / "sine.wav", sine);
  REQUIRE(cli({"spectrogram", "--in", d / "sine.wav", "--out", d / "s", "--fft", "512", "--hop", "128"}).code == 0);
  const Bytes pgm = read_file(d / "s_ch0.pgm");
  const Index frames = 1 + (4096 - 512) / 128;
  const std::string head = "P5\n" + std::to_string(frames) + " 257\n255\n";
  REQUIRE(std::string(pgm.begin(), pgm.begin() + Index(head.size())) == head);
  REQUIRE(pgm.size() == head.size() + std::size_t(frames * 257));
  const std::uint8_t* px = pgm.data() + head.size();
  for (Index f = 0; f < frames; ++f) {
    Index best = 0;
    for (Index row = 0; row < 257; ++row)
      if (px[row * frames + f] > px[best * frames + f]) best = row;
    CHECK(best == 256 - 64);  // 1 kHz is bin 64; low frequencies at the bottom
    CHECK(px[best * frames + f] == 255);
  }
  const Bytes csv = read_file(d / "s_ch0.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 257);

  sine.samples.setZero();
  write_wav(d / "zero.wav", sine);
  REQUIRE(cli({"spectrogram", "--in", d / "zero.wav", "--out", d / "z"}).code == 0);
  const Bytes zero = read_file(d / "z_ch0.pgm");
  CHECK(std::all_of(zero.end() - 257, zero.end(), [](std::uint8_t v) { return v == 0; }));
}

TEST_CASE("train sweep and ablation preconditions") {
  const TempDir d("sweep");
  REQUIRE(cli({"synth-data", "--out", d / "data", "--clips", "2", "--clip-seconds", "0.5", "--seed", "4"}).code == 0);
  CHECK(cli({"train", "--data", d / "data", "--out", d / "o", "--ablation-sweep", "--steps", "2"}).code == kExitUsage);
  CHECK(cli({"train", "--data", d / "data", "--out", d / "o", "--ablation", "6"}).code == kExitUsage);
  REQUIRE(cli({"train", "--stage", "pretrain", "--data", d / "data", "--out", d / "pre", "--steps", "2"}).code == 0);
  REQUIRE(cli({"train", "--data", d / "data", "--out", d / "sw", "--ablation-sweep", "--steps", "3", "--init",
               d / "pre/final.bnc"})
              .code == 0);
  for (const std::string label : {"A", "A+B", "A+B+C", "A+B+C+D", "A+B+C+D+E"})
    CHECK(fs::exists(d / ("sw/" + label + "/final.bnc")));
  REQUIRE(cli({"train", "--data", d / "data", "--out", d / "a2", "--ablation", "2", "--steps", "3"}).code == 0);
  CHECK(read_file(d / "a2/loss_trace.csv") == read_file(d / "sw/A+B/loss_trace.csv"));
}
