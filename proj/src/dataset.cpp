#include "bnc/dataset.hpp"

#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "bnc/error.hpp"

namespace bnc {

namespace fs = std::filesystem;

namespace {

struct Field {
  std::string text;
  std::size_t offset;
};

struct Line {
  std::vector<Field> fields;
  std::size_t offset;
};

// Splits CSV text into non-empty lines of comma-separated fields. No quoting.
std::vector<Line> split_csv(const std::string& text) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::size_t stop = end;
    if (stop > pos && text[stop - 1] == '\r') --stop;
    if (stop > pos) {
      Line line{{}, pos};
      std::size_t f = pos;
      while (true) {
        const std::size_t comma = text.find(',', f);
        const std::size_t fend = comma == std::string::npos || comma > stop ? stop : comma;
        line.fields.push_back({text.substr(f, fend - f), f});
        if (fend == stop) break;
        f = fend + 1;
      }
      lines.push_back(std::move(line));
    }
    pos = end + 1;
  }
  return lines;
}

double parse_real(const Field& f, const char* what) {
  const char* begin = f.text.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (f.text.empty() || end != begin + f.text.size() || errno == ERANGE)
    throw ParseError(std::string("invalid ") + what + " '" + f.text + "'", f.offset);
  return v;
}

std::uint64_t parse_u64(const Field& f, const char* what) {
  const char* begin = f.text.c_str();
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(begin, &end, 10);
  if (f.text.empty() || f.text[0] == '-' || end != begin + f.text.size() || errno == ERANGE)
    throw ParseError(std::string("invalid ") + what + " '" + f.text + "'", f.offset);
  return v;
}

std::string join_fields(const Line& line) {
  std::string s;
  for (std::size_t i = 0; i < line.fields.size(); ++i) s += (i ? "," : "") + line.fields[i].text;
  return s;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string pose_csv_header() {
  return "time_s,tx_x,tx_y,tx_z,tx_qw,tx_qx,tx_qy,tx_qz,rx_x,rx_y,rx_z,rx_qw,rx_qx,rx_qy,rx_qz,reverb_seed,noise_seed";
}

std::string format_pose_csv(const PoseTrack& track, const OracleSeeds& seeds) {
  std::string out = pose_csv_header() + "\n";
  const std::string tail = "," + std::to_string(seeds.reverb) + "," + std::to_string(seeds.noise) + "\n";
  for (std::size_t i = 0; i < track.size(); ++i) {
    const Pose& p = track.poses[i];
    std::string row = fmt(track.times[i]);
    for (const auto* pos : {&p.tx_pos, &p.rx_pos}) {
      const Eigen::Quaterniond& q = pos == &p.tx_pos ? p.tx_rot : p.rx_rot;
      for (int k = 0; k < 3; ++k) row += "," + fmt((*pos)[k]);
      for (double c : {q.w(), q.x(), q.y(), q.z()}) row += "," + fmt(c);
    }
    out += row + tail;
  }
  return out;
}

PoseTrack parse_pose_csv(const std::string& text, OracleSeeds* seeds) {
  const auto lines = split_csv(text);
  if (lines.empty()) throw ParseError("pose csv is empty", 0);
  if (join_fields(lines[0]) != pose_csv_header()) throw ParseError("unexpected pose csv header", lines[0].offset);
  PoseTrack track;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const Line& line = lines[li];
    if (line.fields.size() != kPoseCsvColumns)
      throw ParseError("pose row has " + std::to_string(line.fields.size()) + " columns, expected " +
                           std::to_string(kPoseCsvColumns),
                       line.offset);
    double v[15];
    for (int k = 0; k < 15; ++k) v[k] = parse_real(line.fields[std::size_t(k)], "pose value");
    Pose p;
    p.tx_pos = {v[1], v[2], v[3]};
    p.tx_rot = Eigen::Quaterniond(v[4], v[5], v[6], v[7]);
    p.rx_pos = {v[8], v[9], v[10]};
    p.rx_rot = Eigen::Quaterniond(v[11], v[12], v[13], v[14]);
    if (!track.times.empty() && !(v[0] > track.times.back()))
      throw ParseError("pose timestamps must be strictly increasing", line.fields[0].offset);
    const OracleSeeds row_seeds{parse_u64(line.fields[15], "reverb seed"), parse_u64(line.fields[16], "noise seed")};
    if (seeds) *seeds = row_seeds;
    track.times.push_back(v[0]);
    track.poses.push_back(p);
  }
  if (track.empty()) throw ParseError("pose csv has no rows", text.size());
  return track;
}

std::string manifest_header() { return "clip_id,mono_wav,binaural_wav,pose_csv,rt60,noise_db,seed"; }

std::string format_manifest(const std::vector<ManifestRow>& rows) {
  std::string out = manifest_header() + "\n";
  for (const auto& r : rows)
    out += r.clip_id + "," + r.mono_wav + "," + r.binaural_wav + "," + r.pose_csv + "," + fmt(r.rt60) + "," +
           fmt(r.noise_db) + "," + std::to_string(r.seed) + "\n";
  return out;
}

std::vector<ManifestRow> parse_manifest(const std::string& text) {
  const auto lines = split_csv(text);
  if (lines.empty()) throw ParseError("manifest is empty", 0);
  if (join_fields(lines[0]) != manifest_header()) throw ParseError("unexpected manifest header", lines[0].offset);
  std::vector<ManifestRow> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const Line& line = lines[li];
    if (line.fields.size() != 7)
      throw ParseError("manifest row has " + std::to_string(line.fields.size()) + " columns, expected 7", line.offset);
    ManifestRow r;
    r.clip_id = line.fields[0].text;
    r.mono_wav = line.fields[1].text;
    r.binaural_wav = line.fields[2].text;
    r.pose_csv = line.fields[3].text;
    if (r.clip_id.empty()) throw ParseError("empty clip id", line.fields[0].offset);
    if (r.mono_wav.empty()) throw ParseError("empty mono wav path", line.fields[1].offset);
    if (r.binaural_wav.empty() != r.pose_csv.empty())
      throw ParseError("binaural clips need both a wav and a pose file", line.fields[2].offset);
    r.rt60 = parse_real(line.fields[4], "rt60");
    r.noise_db = parse_real(line.fields[5], "noise_db");
    r.seed = parse_u64(line.fields[6], "seed");
    for (const auto& prev : rows)
      if (prev.clip_id == r.clip_id) throw ParseError("duplicate clip id '" + r.clip_id + "'", line.offset);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ManifestRow> write_dataset(const std::string& dir, const std::vector<ClipRecord>& clips) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create dataset directory '" + dir + "': " + ec.message());
  std::vector<ManifestRow> rows;
  for (const auto& c : clips) {
    if (c.mono.channels() != 1) throw DataError("clip '" + c.id + "': mono audio must have one channel");
    ManifestRow r{c.id, c.id + "_mono.wav", "", "", c.room.rt60, c.room.noise_floor_db, c.seed};
    write_wav((fs::path(dir) / r.mono_wav).string(), c.mono);
    if (c.binaural) {
      if (c.binaural->channels() != 2 || c.binaural->frames() != c.mono.frames())
        throw DataError("clip '" + c.id + "': binaural audio must be 2 channels aligned with the mono source");
      if (c.track.empty()) throw DataError("clip '" + c.id + "': binaural clip without a pose track");
      r.binaural_wav = c.id + "_binaural.wav";
      r.pose_csv = c.id + "_pose.csv";
      write_wav((fs::path(dir) / r.binaural_wav).string(), *c.binaural);
      const std::string csv = format_pose_csv(c.track, OracleSeeds::from_clip_seed(c.seed));
      write_file((fs::path(dir) / r.pose_csv).string(), Bytes(csv.begin(), csv.end()));
    }
    rows.push_back(r);
  }
  const std::string manifest = format_manifest(rows);
  write_file((fs::path(dir) / "manifest.csv").string(), Bytes(manifest.begin(), manifest.end()));
  return rows;
}

Dataset Dataset::open(const std::string& dir) {
  const std::string path = (fs::path(dir) / "manifest.csv").string();
  const Bytes bytes = read_file(path);
  Dataset d;
  d.dir_ = dir;
  try {
    d.rows_ = parse_manifest(std::string(bytes.begin(), bytes.end()));
  } catch (const ParseError& e) {
    throw DataError("'" + path + "': " + e.what());
  }
  return d;
}

bool Dataset::all_binaural() const {
  for (const auto& r : rows_)
    if (r.binaural_wav.empty()) return false;
  return !rows_.empty();
}

ClipRecord Dataset::load(std::size_t i) const {
  const ManifestRow& r = rows_.at(i);
  ClipRecord c;
  c.id = r.clip_id;
  c.seed = r.seed;
  c.room.rt60 = r.rt60;
  c.room.noise_floor_db = r.noise_db;
  c.mono = read_wav((fs::path(dir_) / r.mono_wav).string());
  if (c.mono.channels() != 1) throw DataError("'" + r.mono_wav + "': expected a mono wav");
  if (!r.binaural_wav.empty()) {
    c.binaural = read_wav((fs::path(dir_) / r.binaural_wav).string());
    if (c.binaural->channels() != 2 || c.binaural->frames() != c.mono.frames())
      throw DataError("'" + r.binaural_wav + "': expected 2 channels aligned with the mono source");
    const std::string pose_path = (fs::path(dir_) / r.pose_csv).string();
    const Bytes bytes = read_file(pose_path);
    try {
      c.track = parse_pose_csv(std::string(bytes.begin(), bytes.end()));
    } catch (const ParseError& e) {
      throw DataError("'" + pose_path + "': " + e.what());
    }
  }
  return c;
}

std::vector<ClipRecord> Dataset::load_all() const {
  std::vector<ClipRecord> out;
  for (std::size_t i = 0; i < size(); ++i) out.push_back(load(i));
  return out;
}

ClipRecord make_synthetic_clip(const std::string& id, const RoomSpec& room, double duration, double sample_rate,
                               std::uint64_t seed, const std::optional<Pose>& static_pose) {
  const auto n = static_cast<Index>(std::llround(duration * sample_rate));
  if (n < 1) throw ConfigError("clip duration too short");
  ClipRecord c;
  c.id = id;
  c.room = room;
  c.seed = seed;
  c.track = static_pose ? PoseTrack::constant(*static_pose, duration) : gen_trajectory(room, duration, seed);
  const std::vector<double> x = synth_source(n, sample_rate, seed ^ 0x5eedull);
  const auto rate = static_cast<std::uint32_t>(sample_rate);
  c.mono = AudioBuffer::from_matrix(Eigen::Map<const RowMatrix<double>>(x.data(), 1, n), rate);
  std::vector<double> xf(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xf[i] = double(c.mono.samples(0, Index(i)));
  c.binaural = AudioBuffer::from_matrix(
      spatialize_oracle(xf, c.track, room, sample_rate, OracleSeeds::from_clip_seed(seed)), rate);
  return c;
}

}  // namespace bnc
