#include "bnc/model_config.hpp"

#include <charconv>
#include <sstream>

#include "bnc/error.hpp"

namespace bnc {

Index ModelConfig::downsampling() const {
  Index m = 1;
  for (Index s : strides) m *= s;
  return m;
}

Index ModelConfig::codebook_bits() const {
  Index bits = 0;
  while ((Index{1} << bits) < codebook_size) ++bits;
  return bits;
}

void ModelConfig::validate() const {
  if (!(sample_rate > 0.0)) throw ConfigError("sample_rate must be positive");
  if (strides.empty() || strides.size() > 4) throw ConfigError("strides must list 1 to 4 values");
  for (Index s : strides)
    if (s < 1 || s > 255) throw ConfigError("each stride must lie in [1, 255]");
  if (base_channels < 1 || latent_dim < 1) throw ConfigError("channel counts must be positive");
  if (rvq_layers < 1 || rvq_layers > 255) throw ConfigError("rvq_layers must lie in [1, 255]");
  if (codebook_size < 2 || (codebook_size & (codebook_size - 1)) != 0 || codebook_bits() > 16)
    throw ConfigError("codebook_size must be a power of two between 2 and 65536");
  if (film_blocks < 0 || film_blocks > blocks())
    throw ConfigError("film_blocks must lie in [0, number of decoder blocks]");
  if (fourier_features < 1 || !(fourier_sigma > 0.0)) throw ConfigError("fourier encoding must be non-degenerate");
  if (cond_hidden < 1 || warp_hidden < 1) throw ConfigError("hidden widths must be positive");
  if (!(cond_rate > 0.0)) throw ConfigError("cond_rate must be positive");
  if (!(room_width > 0.0 && room_height > 0.0)) throw ConfigError("room extents must be positive");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("ema_decay must lie in [0, 1]");
  disc_stft.validate();
  if (stft_disc_channels < 1) throw ConfigError("stft_disc_channels must be positive");
  if (msd_channels < 16 || msd_channels % 16 != 0 || msd_max_channels % 16 != 0 || msd_max_channels < msd_channels)
    throw ConfigError("msd channel widths must be multiples of the group size 16");
  if (msd_kernel < 1) throw ConfigError("msd_kernel must be positive");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.sample_rate = 8000.0;
  c.strides = {2, 2};
  c.base_channels = 8;
  c.latent_dim = 8;
  c.rvq_layers = 2;
  c.codebook_size = 16;
  c.film_blocks = 1;
  c.fourier_features = 8;
  c.cond_hidden = 32;
  c.warp_hidden = 8;
  c.disc_stft = {256, 64};
  c.stft_disc_channels = 4;
  c.msd_channels = 16;
  c.msd_max_channels = 32;
  c.msd_kernel = 9;
  return c;
}

namespace {

std::string join_strides(const std::vector<Index>& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::map<std::string, std::string> to_key_values(const ModelConfig& c) {
  return {
      {"model.sample_rate", fmt(c.sample_rate)},
      {"model.strides", join_strides(c.strides)},
      {"model.base_channels", std::to_string(c.base_channels)},
      {"model.latent_dim", std::to_string(c.latent_dim)},
      {"model.rvq_layers", std::to_string(c.rvq_layers)},
      {"model.codebook_size", std::to_string(c.codebook_size)},
      {"model.film_blocks", std::to_string(c.film_blocks)},
      {"model.fourier_features", std::to_string(c.fourier_features)},
      {"model.fourier_sigma", fmt(c.fourier_sigma)},
      {"model.cond_hidden", std::to_string(c.cond_hidden)},
      {"model.warp_hidden", std::to_string(c.warp_hidden)},
      {"model.cond_rate", fmt(c.cond_rate)},
      {"model.room_width", fmt(c.room_width)},
      {"model.room_height", fmt(c.room_height)},
      {"model.ema_decay", fmt(c.ema_decay)},
      {"model.disc_fft_size", std::to_string(c.disc_stft.fft_size)},
      {"model.disc_hop", std::to_string(c.disc_stft.hop)},
      {"model.stft_disc_channels", std::to_string(c.stft_disc_channels)},
      {"model.msd_channels", std::to_string(c.msd_channels)},
      {"model.msd_max_channels", std::to_string(c.msd_max_channels)},
      {"model.msd_kernel", std::to_string(c.msd_kernel)},
  };
}

bool is_model_key(const std::string& key) { return to_key_values(ModelConfig{}).count(key) > 0; }

void apply_key_value(ModelConfig& c, const std::string& key, const std::string& v) {
  if (key == "model.sample_rate") c.sample_rate = parse_double(key, v);
  else if (key == "model.strides") {
    c.strides.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) c.strides.push_back(parse_index(key, item));
  } else if (key == "model.base_channels") c.base_channels = parse_index(key, v);
  else if (key == "model.latent_dim") c.latent_dim = parse_index(key, v);
  else if (key == "model.rvq_layers") c.rvq_layers = parse_index(key, v);
  else if (key == "model.codebook_size") c.codebook_size = parse_index(key, v);
  else if (key == "model.film_blocks") c.film_blocks = parse_index(key, v);
  else if (key == "model.fourier_features") c.fourier_features = parse_index(key, v);
  else if (key == "model.fourier_sigma") c.fourier_sigma = parse_double(key, v);
  else if (key == "model.cond_hidden") c.cond_hidden = parse_index(key, v);
  else if (key == "model.warp_hidden") c.warp_hidden = parse_index(key, v);
  else if (key == "model.cond_rate") c.cond_rate = parse_double(key, v);
  else if (key == "model.room_width") c.room_width = parse_double(key, v);
  else if (key == "model.room_height") c.room_height = parse_double(key, v);
  else if (key == "model.ema_decay") c.ema_decay = parse_double(key, v);
  else if (key == "model.disc_fft_size") c.disc_stft.fft_size = parse_index(key, v);
  else if (key == "model.disc_hop") c.disc_stft.hop = parse_index(key, v);
  else if (key == "model.stft_disc_channels") c.stft_disc_channels = parse_index(key, v);
  else if (key == "model.msd_channels") c.msd_channels = parse_index(key, v);
  else if (key == "model.msd_max_channels") c.msd_max_channels = parse_index(key, v);
  else if (key == "model.msd_kernel") c.msd_kernel = parse_index(key, v);
  else throw ConfigError("unknown model key '" + key + "'");
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string format_key_values(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double d = std::stod(value, &used);
    if (used == value.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
}

Index parse_index(const std::string& key, const std::string& value) {
  Index v = 0;
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "off" || value == "no") return false;
  throw ConfigError("'" + key + "' expects a boolean, got '" + value + "'");
}

}  // namespace bnc
