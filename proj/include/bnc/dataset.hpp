#pragma once

// On-disk clip collections.
//
//   <dir>/manifest.csv   clip_id,mono_wav,binaural_wav,pose_csv,rt60,noise_db,seed
//   <dir>/<id>_mono.wav, <id>_binaural.wav, <id>_pose.csv
//
// Mono-only clips leave binaural_wav and pose_csv empty. Pose files carry a
// header row and 17 columns: time_s, tx position and quaternion (w,x,y,z),
// rx position and quaternion, then the oracle's reverb and noise seeds.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bnc/audio_io.hpp"
#include "bnc/spatial_sim.hpp"

namespace bnc {

inline constexpr int kPoseCsvColumns = 17;

struct ManifestRow {
  std::string clip_id;
  std::string mono_wav;
  std::string binaural_wav;  // empty for mono-only clips
  std::string pose_csv;      // empty for mono-only clips
  double rt60 = 0.0;
  double noise_db = 0.0;
  std::uint64_t seed = 0;
};

struct ClipRecord {
  std::string id;
  AudioBuffer mono;
  std::optional<AudioBuffer> binaural;
  PoseTrack track;
  RoomSpec room;
  std::uint64_t seed = 0;

  bool has_binaural() const { return binaural.has_value() && !track.empty(); }
};

std::string pose_csv_header();
std::string format_pose_csv(const PoseTrack& track, const OracleSeeds& seeds);
PoseTrack parse_pose_csv(const std::string& text, OracleSeeds* seeds = nullptr);

std::string manifest_header();
std::string format_manifest(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> parse_manifest(const std::string& text);

// Writes the clips and manifest into `dir`, creating it if needed.
std::vector<ManifestRow> write_dataset(const std::string& dir, const std::vector<ClipRecord>& clips);

class Dataset {
 public:
  static Dataset open(const std::string& dir);

  std::size_t size() const { return rows_.size(); }
  const std::vector<ManifestRow>& rows() const { return rows_; }
  const std::string& dir() const { return dir_; }
  bool all_binaural() const;

  // Loads one clip; file problems are reported with the offending path.
  ClipRecord load(std::size_t i) const;
  std::vector<ClipRecord> load_all() const;

 private:
  std::string dir_;
  std::vector<ManifestRow> rows_;
};

inline Dataset read_dataset(const std::string& dir) { return Dataset::open(dir); }

// One synthetic clip: a trajectory (or the given static pose), a harmonic
// source and its oracle rendering.
ClipRecord make_synthetic_clip(const std::string& id, const RoomSpec& room, double duration, double sample_rate,
                               std::uint64_t seed, const std::optional<Pose>& static_pose = std::nullopt);

}  // namespace bnc
