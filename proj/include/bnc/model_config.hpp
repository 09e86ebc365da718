#pragma once

// Architecture hyperparameters for the generator and the discriminators.
// Defaults follow common neural-codec conventions; `tiny()` is the
// desk-scale test model.

#include <map>
#include <string>
#include <vector>

#include "bnc/dsp.hpp"
#include "bnc/tensor.hpp"

namespace bnc {

struct ModelConfig {
  double sample_rate = 48000.0;
  std::vector<Index> strides{2, 4, 5, 8};
  Index base_channels = 32;
  Index latent_dim = 128;     // D
  Index rvq_layers = 8;       // N
  Index codebook_size = 1024;
  Index film_blocks = 2;      // K, number of trailing decoder blocks with FiLM
  Index fourier_features = 32;
  double fourier_sigma = 1.0;
  Index cond_hidden = 256;    // width of the condition MLP
  Index warp_hidden = 32;
  double cond_rate = kPoseRate;
  double room_width = 4.6;    // horizontal extent of the room, meters
  double room_height = 2.4;
  double ema_decay = 0.99;

  StftConfig disc_stft{1024, 256};
  Index stft_disc_channels = 16;
  Index msd_channels = 16;
  Index msd_max_channels = 256;
  Index msd_kernel = 41;

  Index downsampling() const;  // M
  Index blocks() const { return static_cast<Index>(strides.size()); }
  Index codebook_bits() const;
  Index channels_at(Index block) const { return base_channels << block; }

  void validate() const;

  // Desk-scale model: strides (2, 2), D 8, N 2, codebook 16, 8 kHz.
  static ModelConfig tiny();
};

// Flat key=value form; every field is addressable.
std::map<std::string, std::string> to_key_values(const ModelConfig& cfg);
void apply_key_value(ModelConfig& cfg, const std::string& key, const std::string& value);
bool is_model_key(const std::string& key);

// Parsing helpers shared with other config structs.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin);
std::string format_key_values(const std::map<std::string, std::string>& kv);
double parse_double(const std::string& key, const std::string& value);
Index parse_index(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace bnc
