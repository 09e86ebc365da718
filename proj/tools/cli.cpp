#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "bnc/dataset.hpp"
#include "bnc/objectives.hpp"
#include "bnc/spatial_sim.hpp"
#include "bnc/trainer.hpp"
#include "bnc/wire.hpp"

namespace bnc {

namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

std::uint64_t clip_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + i + 1;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("BNC_SEED");
  if (!s || !*s) return std::nullopt;
  const std::string v(s);
  if (v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("BNC_SEED must be an unsigned integer, got '" + v + "'");
  return std::stoull(v);
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    out.push_back(parse_double(what, text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

struct LoadedModel {
  ModelConfig cfg;
  std::unique_ptr<Generator<float>> gen;
};

LoadedModel load_model(const std::string& ckpt) {
  const Archive ar = load_archive(ckpt);
  LoadedModel m;
  m.cfg = model_from_checkpoint(ar);
  m.gen = std::make_unique<Generator<float>>(m.cfg, 0);
  m.gen->load(ar);
  return m;
}

AudioBuffer read_mono(const std::string& path, const ModelConfig& cfg) {
  AudioBuffer a = read_wav(path);
  if (a.channels() != 1) throw DataError(path + ": expected a mono wav, got " + std::to_string(a.channels()) + " channels");
  if (double(a.sample_rate) != cfg.sample_rate)
    throw DataError(path + ": sample rate " + std::to_string(a.sample_rate) + " Hz does not match the model's " +
                    std::to_string(std::int64_t(cfg.sample_rate)) + " Hz");
  return a;
}

PoseTrack read_pose(const std::string& path) {
  try {
    return parse_pose_csv(read_text(path));
  } catch (const ParseError& e) {
    throw DataError(path + ": " + e.what());
  }
}

CodeGrid encode_codes(const Generator<float>& gen, const AudioBuffer& mono) {
  NoGradGuard<float> guard;
  return gen.quantize(gen.encode(mono.tensor<float>())).codes;
}

AudioBuffer render_codes(const Generator<float>& gen, const CodeGrid& codes, const PoseTrack& track, Index samples) {
  if (!(codes.fingerprint == gen.fingerprint()))
    throw DataError("bitstream header is incompatible with the checkpoint's codec configuration");
  NoGradGuard<float> guard;
  const Condition<float> cond = make_condition<float>(track, samples, gen.config());
  return AudioBuffer::from_tensor(gen.binauralize(codes, cond, samples), std::uint32_t(gen.config().sample_rate));
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  double hours = 0;
  int clips = 0;
  double clip_seconds = 2.0;
  double rate = 8000;
  std::string room = "default";
  std::optional<double> rt60, noise_db;
  std::string azimuths;
  double distance = 1.0;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  RoomSpec room = a.room == "anechoic" ? RoomSpec::anechoic() : RoomSpec{};
  if (a.rt60) room.rt60 = *a.rt60;
  if (a.noise_db) room.noise_floor_db = *a.noise_db;
  room.validate();
  if (a.clip_seconds <= 0) throw ConfigError("--clip-seconds must be positive");
  if (a.rate <= 0) throw ConfigError("--rate must be positive");
  int n = a.clips;
  double duration = a.clip_seconds;
  if (a.hours > 0) {
    const double total = a.hours * 3600.0;
    n = std::max(1, int(std::ceil(total / a.clip_seconds - 1e-9)));
    duration = total / n;
  }
  if (n < 1) throw ConfigError("give --hours or --clips");
  std::vector<double> az;
  if (!a.azimuths.empty()) az = parse_list(a.azimuths, "--azimuths");
  const std::uint64_t seed = a.seed ? *a.seed : env_seed().value_or(0);

  std::vector<ClipRecord> clips;
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "clip%04d", i);
    std::optional<Pose> pose;
    if (!az.empty()) pose = pose_at_azimuth(room, az[std::size_t(i) % az.size()], a.distance);
    clips.push_back(make_synthetic_clip(id, room, duration, a.rate, clip_seed(seed, std::uint64_t(i)), pose));
  }
  write_dataset(a.out, clips);
  double total = 0;
  for (const auto& c : clips) total += double(c.mono.frames()) / a.rate;
  out << "wrote " << n << " clips (" << total << " s of audio) to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string stage = "finetune";
  std::string data;
  std::string out;
  std::string preset = "tiny";
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::optional<Index> steps;
  std::optional<std::uint64_t> seed;
  std::optional<int> ablation;
  bool sweep = false;
  std::string init;
  std::string resume;
  std::string precision = "f32";
  Index log_every = 0;
};

template <typename Scalar>
RunResult train_one(const ModelConfig& model, const TrainConfig& train, const std::vector<ClipRecord>& clips,
                    const std::string& out_dir, const std::optional<Archive>& init,
                    const std::optional<Archive>& resume, Index log_every, std::ostream& out) {
  RunOptions opts;
  opts.out_dir = out_dir;
  opts.init = init;
  opts.resume = resume;
  if (log_every > 0) {
    out << LossReport::csv_header() << "\n";
    opts.on_step = [&](const StepResult& r) {
      if (r.report.step % log_every == 0) out << r.report.csv_line() << "\n";
    };
  }
  return run<Scalar>(model, train, clips, opts);
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  ModelConfig model = a.preset == "full" ? ModelConfig{} : ModelConfig::tiny();
  TrainConfig train;
  train.clip_len = 4 * model.downsampling() * 64;
  std::map<std::string, std::string> kv;
  for (const auto& path : a.configs) {
    for (const auto& [k, v] : parse_key_values(read_text(path), path)) kv[k] = v;
  }
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  apply_config(model, train, kv);
  train.stage = parse_stage(a.stage);
  if (a.steps) train.steps = *a.steps;
  if (a.seed) train.seed = *a.seed;
  else if (!kv.count("train.seed")) train.seed = env_seed().value_or(train.seed);
  if (a.ablation && a.sweep) throw ConfigError("--ablation and --ablation-sweep are exclusive");
  if (a.ablation) train.set_ablation_level(*a.ablation);
  if (a.precision != "f32" && a.precision != "f64") throw ConfigError("--precision must be f32 or f64");
  if (!a.resume.empty() && a.sweep) throw ConfigError("--resume cannot be combined with --ablation-sweep");

  std::vector<TrainConfig> runs;
  std::vector<std::string> dirs;
  if (a.sweep) {
    for (int level = 1; level <= 5; ++level) {
      TrainConfig t = train;
      t.set_ablation_level(level);
      runs.push_back(t);
      dirs.push_back((fs::path(a.out) / t.ablation_label()).string());
    }
  } else {
    runs.push_back(train);
    dirs.push_back(a.out);
  }
  for (const auto& t : runs) {
    t.validate(t.effective_model(model));
    if (t.stage == Stage::finetune && t.mono_pretrain_init && a.init.empty() && a.resume.empty())
      throw ConfigError("mono_pretrain_init is on (ablation " + t.ablation_label() +
                        "); pass --resume-from-pretrain with a pretrain checkpoint or turn the toggle off");
  }

  const Dataset ds = Dataset::open(a.data);
  if (train.stage == Stage::finetune && !ds.all_binaural())
    throw DataError(a.data + ": fine-tuning needs binaural audio and pose for every clip");
  std::optional<Archive> init, resume;
  if (!a.init.empty()) init = load_archive(a.init);
  if (!a.resume.empty()) resume = load_archive(a.resume);
  const std::vector<ClipRecord> clips = ds.load_all();

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::optional<Archive> use_init = runs[i].mono_pretrain_init ? init : std::nullopt;
    const RunResult r = a.precision == "f64"
                            ? train_one<double>(model, runs[i], clips, dirs[i], use_init, resume, a.log_every, out)
                            : train_one<float>(model, runs[i], clips, dirs[i], use_init, resume, a.log_every, out);
    const LossReport& last = r.steps.empty() ? LossReport{} : r.steps.back().report;
    out << "trained " << to_string(runs[i].stage) << " [" << runs[i].ablation_label() << "] steps="
        << runs[i].steps << " final_total=" << last.total << " -> " << (fs::path(dirs[i]) / kFinalCheckpoint).string()
        << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_encode(const std::string& in, const std::string& ckpt, const std::string& out_path, std::ostream& out) {
  const LoadedModel m = load_model(ckpt);
  const AudioBuffer mono = read_mono(in, m.cfg);
  const CodeGrid codes = encode_codes(*m.gen, mono);
  const Bytes bits = pack(codes);
  write_file(out_path, bits);
  const Index m_hop = m.cfg.downsampling();
  out << "encoded " << mono.frames() << " samples into " << codes.frames() << " frames, " << bits.size()
      << " bytes (" << bitrate(m.cfg).bps() << " bps payload)\n";
  if (mono.frames() % m_hop != 0)
    out << "note: input length is not a multiple of " << m_hop << "; decode yields " << codes.frames() * m_hop
        << " samples unless --samples " << mono.frames() << " is given\n";
  return kExitOk;
}

int cmd_decode(const std::string& in, const std::string& pose, const std::string& ckpt, const std::string& out_path,
               Index samples, std::ostream& out) {
  const LoadedModel m = load_model(ckpt);
  CodeGrid codes;
  try {
    codes = unpack(read_file(in));
  } catch (const ParseError& e) {
    throw DataError(in + ": " + e.what());
  }
  const Index t = samples > 0 ? samples : codes.frames() * m.cfg.downsampling();
  if (t > codes.frames() * m.cfg.downsampling()) throw ConfigError("--samples exceeds the decoded length");
  const AudioBuffer y = render_codes(*m.gen, codes, read_pose(pose), t);
  write_wav(out_path, y);
  out << "decoded " << codes.frames() << " frames into " << y.frames() << " stereo samples\n";
  return kExitOk;
}

int cmd_binauralize(const std::string& in, const std::string& pose, const std::string& ckpt,
                    const std::string& out_path, std::ostream& out) {
  const LoadedModel m = load_model(ckpt);
  const AudioBuffer mono = read_mono(in, m.cfg);
  const AudioBuffer y = render_codes(*m.gen, encode_codes(*m.gen, mono), read_pose(pose), mono.frames());
  write_wav(out_path, y);
  out << "rendered " << y.frames() << " stereo samples\n";
  return kExitOk;
}

int cmd_stream(const std::string& in, const std::string& pose, const std::string& ckpt, const std::string& out_path,
               const std::string& endpoint, std::ostream& out) {
  const LoadedModel m = load_model(ckpt);
  const AudioBuffer mono = read_mono(in, m.cfg);
  const PoseTrack track = read_pose(pose);
  const CodeGrid codes = encode_codes(*m.gen, mono);
  SessionReport r;
  if (endpoint.empty()) {
    PipeChannel pipe;
    r = stream_session(pipe, pipe, codes);
  } else {
    TcpListener listener(endpoint);
    const Endpoint e = parse_endpoint(endpoint);
    std::unique_ptr<SocketChannel> client;
    std::exception_ptr connect_error;
    std::thread connector([&] {
      try {
        client = connect_channel("tcp://" + e.host + ":" + std::to_string(listener.port()));
      } catch (...) {
        connect_error = std::current_exception();
      }
    });
    std::unique_ptr<SocketChannel> server = listener.accept();
    connector.join();
    if (connect_error) std::rethrow_exception(connect_error);
    r = stream_session(*client, *server, codes);
  }
  const AudioBuffer y = render_codes(*m.gen, r.received, track, mono.frames());
  write_wav(out_path, y);
  const double seconds = double(mono.frames()) / m.cfg.sample_rate;
  out << "streamed " << r.received.frames() << " frames: header " << r.header_bytes << " B, payload "
      << r.payload_bytes << " B (" << 8.0 * double(r.payload_bytes) / seconds << " bps measured, "
      << bitrate(m.cfg).bps() << " bps nominal); first decode after " << r.frames_before_first_decode
      << " frame(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_eval(const std::string& pred, const std::string& ref, const std::string& out_path, std::ostream& out) {
  const EvalReport rep = eval_dirs(pred, ref);
  std::ostringstream csv;
  csv << "clip,wave_l2,mel_l2,itd_err_samples,ild_err_db\n";
  auto line = [&](const EvalRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g\n", r.clip.c_str(), r.wave_l2, r.mel_l2,
                  r.itd_err_samples, r.ild_err_db);
    csv << buf;
  };
  for (const auto& r : rep.rows) line(r);
  line(rep.mean);
  out << csv.str();
  if (!out_path.empty()) {
    const std::string s = csv.str();
    write_file(out_path, Bytes(s.begin(), s.end()));
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

constexpr double kSpectrogramFloorDb = -100.0;

int cmd_spectrogram(const std::string& in, const std::string& prefix, Index fft, Index hop, std::ostream& out) {
  const AudioBuffer a = read_wav(in);
  const StftConfig cfg{fft, hop > 0 ? hop : fft / 4};
  cfg.validate();
  if (a.frames() < cfg.fft_size) throw DataError(in + ": shorter than one analysis frame");
  for (Index c = 0; c < a.channels(); ++c) {
    Array<double> x = a.samples.row(c).cast<double>().transpose().array();
    const Tensord mag = stft_magnitude(Tensord({a.frames()}, std::move(x)), cfg);
    const Index frames = mag.dim(0), bins = mag.dim(1);
    RowMatrix<double> db(bins, frames);
    for (Index f = 0; f < frames; ++f)
      for (Index b = 0; b < bins; ++b)
        db(b, f) = std::max(kSpectrogramFloorDb, 20.0 * std::log10(mag.data()[f * bins + b] + 1e-30));
    const double hi = db.maxCoeff();
    const std::string base = prefix + "_ch" + std::to_string(c);

    Bytes pgm;
    const std::string head = "P5\n" + std::to_string(frames) + " " + std::to_string(bins) + "\n255\n";
    pgm.insert(pgm.end(), head.begin(), head.end());
    for (Index row = 0; row < bins; ++row) {
      const Index b = bins - 1 - row;
      for (Index f = 0; f < frames; ++f) {
        const double v = hi > kSpectrogramFloorDb ? (db(b, f) - kSpectrogramFloorDb) / (hi - kSpectrogramFloorDb) : 0.0;
        pgm.push_back(std::uint8_t(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
      }
    }
    write_file(base + ".pgm", pgm);

    std::string csv;
    char buf[32];
    for (Index b = 0; b < bins; ++b) {
      for (Index f = 0; f < frames; ++f) {
        std::snprintf(buf, sizeof buf, f + 1 < frames ? "%.6g," : "%.6g\n", db(b, f));
        csv += buf;
      }
    }
    write_file(base + ".csv", Bytes(csv.begin(), csv.end()));
    out << "wrote " << base << ".pgm and " << base << ".csv (" << bins << " bins x " << frames << " frames)\n";
  }
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------

ModelConfig model_from_checkpoint(const Archive& ar) {
  ModelConfig cfg;
  for (const auto& [k, v] : ar.meta)
    if (is_model_key(k)) apply_key_value(cfg, k, v);
  if (!ar.meta.count("model.latent_dim")) throw DataError("checkpoint carries no model configuration");
  cfg.validate();
  return cfg;
}

EvalRow eval_pair(const std::string& clip, const AudioBuffer& pred, const AudioBuffer& ref) {
  if (pred.channels() != 2 || ref.channels() != 2) throw DataError(clip + ": eval needs stereo audio");
  if (pred.sample_rate != ref.sample_rate) throw DataError(clip + ": sample rates differ");
  if (pred.frames() != ref.frames())
    throw DataError(clip + ": lengths differ (" + std::to_string(pred.frames()) + " vs " +
                    std::to_string(ref.frames()) + ")");
  const RowMatrix<double> p = pred.samples.cast<double>(), r = ref.samples.cast<double>();
  EvalRow row;
  row.clip = clip;
  row.wave_l2 = (p - r).colwise().norm().mean();

  const SpectralConfig spec = SpectralConfig::for_rate(pred.sample_rate);
  if (pred.frames() >= spec.stft.fft_size) {
    double sq = 0;
    Index n = 0;
    for (Index c = 0; c < 2; ++c) {
      const Tensord mp = mel_spectrogram(Tensord({p.cols()}, p.row(c).transpose().array()), spec.stft, spec.mel);
      const Tensord mr = mel_spectrogram(Tensord({r.cols()}, r.row(c).transpose().array()), spec.stft, spec.mel);
      sq += (mp.data() - mr.data()).square().sum();
      n += mp.numel();
    }
    row.mel_l2 = std::sqrt(sq / double(n));
  }
  const Index max_lag = Index(std::ceil(1e-3 * pred.sample_rate));
  row.itd_err_samples = double(std::abs(interaural_lag(p, max_lag) - interaural_lag(r, max_lag)));
  row.ild_err_db = std::abs(interaural_level_db(p) - interaural_level_db(r));
  return row;
}

EvalReport eval_dirs(const std::string& pred_dir, const std::string& ref_dir) {
  auto stereo_files = [](const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError(dir + ": not a directory");
    std::map<std::string, AudioBuffer> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() != ".wav") continue;
      AudioBuffer a = read_wav(e.path().string());
      if (a.channels() == 2) files.emplace(e.path().stem().string(), std::move(a));
    }
    return files;
  };
  const auto pred = stereo_files(pred_dir), ref = stereo_files(ref_dir);
  std::vector<std::string> missing;
  for (const auto& [id, _] : ref)
    if (!pred.count(id)) missing.push_back("missing prediction: " + id);
  for (const auto& [id, _] : pred)
    if (!ref.count(id)) missing.push_back("no reference for: " + id);
  if (!missing.empty()) {
    std::string msg = "unmatched clip ids";
    for (const auto& m : missing) msg += "\n  " + m;
    throw DataError(msg);
  }
  if (ref.empty()) throw DataError(ref_dir + ": no stereo wav files");
  EvalReport rep;
  rep.mean.clip = "mean";
  for (const auto& [id, r] : ref) {
    rep.rows.push_back(eval_pair(id, pred.at(id), r));
    rep.mean.wave_l2 += rep.rows.back().wave_l2;
    rep.mean.mel_l2 += rep.rows.back().mel_l2;
    rep.mean.itd_err_samples += rep.rows.back().itd_err_samples;
    rep.mean.ild_err_db += rep.rows.back().ild_err_db;
  }
  const double n = double(rep.rows.size());
  rep.mean.wave_l2 /= n;
  rep.mean.mel_l2 /= n;
  rep.mean.itd_err_samples /= n;
  rep.mean.ild_err_db /= n;
  return rep;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Binaural neural codec: data synthesis, training, coding and evaluation", "bnc"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Synthesize a binaural dataset with the analytic spatializer");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--hours", synth.hours, "Total duration in hours, split into clips");
  s->add_option("--clips", synth.clips, "Number of clips (when --hours is not given)");
  s->add_option("--clip-seconds", synth.clip_seconds, "Target clip length");
  s->add_option("--rate", synth.rate, "Sample rate in Hz");
  s->add_option("--room", synth.room, "Room preset")->check(CLI::IsMember({"default", "anechoic"}));
  s->add_option("--rt60", synth.rt60, "Override the reverberation time (s)");
  s->add_option("--noise-db", synth.noise_db, "Override the noise floor (dBFS)");
  s->add_option("--azimuths", synth.azimuths, "Static source azimuths in degrees, cycled over clips (e.g. -90,0,90)");
  s->add_option("--distance", synth.distance, "Source distance for static azimuths (m)");
  s->add_option("--seed", synth.seed, "Seed (falls back to BNC_SEED)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run a training stage");
  t->add_option("--stage", train.stage, "pretrain or finetune")->check(CLI::IsMember({"pretrain", "finetune"}));
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--out", train.out, "Output directory for checkpoints and the loss trace")->required();
  t->add_option("--preset", train.preset, "Base model")->check(CLI::IsMember({"tiny", "full"}));
  t->add_option("--config", train.configs, "key=value config file(s), applied in order");
  t->add_option("--set", train.sets, "Single key=value override(s)");
  t->add_option("--steps", train.steps, "Number of steps");
  t->add_option("--seed", train.seed, "Seed (falls back to train.seed, then BNC_SEED)");
  t->add_option("--ablation", train.ablation, "Cumulative component level 1..5 (A .. A+B+C+D+E)")
      ->check(CLI::Range(1, 5));
  t->add_flag("--ablation-sweep", train.sweep, "Run all five ablation levels into <out>/<label>");
  t->add_option("--resume-from-pretrain,--init", train.init, "Pretrain checkpoint to initialize fine-tuning");
  t->add_option("--resume", train.resume, "Checkpoint of this stage to continue from");
  t->add_option("--precision", train.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  t->add_option("--log-every", train.log_every, "Print a loss row every N steps");

  std::string in, out_path, ckpt, pose, endpoint, pred, ref;
  Index samples = 0, fft = 512, hop = 0;
  auto* enc = app.add_subcommand("encode", "Encode a mono wav into a bitstream");
  enc->add_option("--in", in)->required();
  enc->add_option("--ckpt", ckpt)->required();
  enc->add_option("--out", out_path)->required();

  auto* dec = app.add_subcommand("decode", "Decode a bitstream into binaural audio for a pose track");
  dec->add_option("--in", in)->required();
  dec->add_option("--pose", pose, "Pose CSV")->required();
  dec->add_option("--ckpt", ckpt)->required();
  dec->add_option("--out", out_path)->required();
  dec->add_option("--samples", samples, "Output length (default: frames x hop)");

  auto* bin = app.add_subcommand("binauralize", "Encode and decode in one process");
  bin->add_option("--in", in)->required();
  bin->add_option("--pose", pose)->required();
  bin->add_option("--ckpt", ckpt)->required();
  bin->add_option("--out", out_path)->required();

  auto* str = app.add_subcommand("stream", "Encode, stream over a transport, and decode");
  str->add_option("--in", in)->required();
  str->add_option("--pose", pose)->required();
  str->add_option("--ckpt", ckpt)->required();
  str->add_option("--out", out_path)->required();
  str->add_option("--endpoint", endpoint, "tcp://host:port (port 0 picks one); default is an in-process pipe");

  auto* ev = app.add_subcommand("eval", "Objective metrics between predicted and reference stereo wavs");
  ev->add_option("--pred", pred)->required();
  ev->add_option("--ref", ref)->required();
  ev->add_option("--out", out_path, "Also write the CSV report here");

  auto* sp = app.add_subcommand("spectrogram", "Log-magnitude spectrogram as PGM image and CSV");
  sp->add_option("--in", in)->required();
  sp->add_option("--out", out_path, "Output prefix; writes <prefix>_ch<c>.pgm/.csv")->required();
  sp->add_option("--fft", fft);
  sp->add_option("--hop", hop, "Default fft/4");

  std::vector<const char*> argv{"bnc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_train(train, out);
    if (enc->parsed()) return cmd_encode(in, ckpt, out_path, out);
    if (dec->parsed()) return cmd_decode(in, pose, ckpt, out_path, samples, out);
    if (bin->parsed()) return cmd_binauralize(in, pose, ckpt, out_path, out);
    if (str->parsed()) return cmd_stream(in, pose, ckpt, out_path, endpoint, out);
    if (ev->parsed()) return cmd_eval(pred, ref, out_path, out);
    if (sp->parsed()) return cmd_spectrogram(in, out_path, fft, hop, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace bnc
