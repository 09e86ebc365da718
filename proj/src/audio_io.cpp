#include "bnc/audio_io.hpp"

namespace bnc {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

}  // namespace

AudioBuffer AudioBuffer::from_matrix(const RowMatrix<double>& m, std::uint32_t sample_rate) {
  AudioBuffer a;
  a.sample_rate = sample_rate;
  a.samples = m.cast<float>();
  return a;
}

Bytes encode_wav(const AudioBuffer& audio) {
  const auto channels = static_cast<std::uint16_t>(audio.channels());
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 4);
  Bytes out;
  ByteWriter w(out);
  w.str("RIFF");
  w.u32(4 + 8 + 16 + 8 + data_bytes);
  w.str("WAVE");
  w.str("fmt ");
  w.u32(16);
  w.u16(kFormatFloat);
  w.u16(channels);
  w.u32(audio.sample_rate);
  w.u32(audio.sample_rate * channels * 4);
  w.u16(static_cast<std::uint16_t>(channels * 4));
  w.u16(32);
  w.str("data");
  w.u32(data_bytes);
  for (Index t = 0; t < audio.frames(); ++t)
    for (Index c = 0; c < audio.channels(); ++c) w.f32(audio.samples(c, t));
  return out;
}

AudioBuffer decode_wav(const Bytes& bytes) {
  ByteReader r(bytes);
  if (r.str(4, "RIFF tag") != "RIFF") throw ParseError("not a RIFF file", 0);
  r.u32("RIFF size");
  if (r.str(4, "WAVE tag") != "WAVE") throw ParseError("RIFF file is not WAVE", 8);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (true) {
    const std::size_t chunk_at = r.offset();
    const std::string id = r.str(4, "chunk id");
    const std::uint32_t size = r.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw ParseError("fmt chunk too short", chunk_at);
      format = r.u16("format tag");
      channels = r.u16("channel count");
      rate = r.u32("sample rate");
      r.u32("byte rate");
      r.u16("block align");
      bits = r.u16("bits per sample");
      r.str(size - 16 + (size & 1), "fmt chunk");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError("data chunk before fmt chunk", chunk_at);
      if (channels == 0) throw ParseError("zero channels", chunk_at);
      const bool is_float = format == kFormatFloat && bits == 32;
      const bool is_pcm16 = format == kFormatPcm && bits == 16;
      if (!is_float && !is_pcm16)
        throw ParseError("unsupported sample format " + std::to_string(format) + "/" + std::to_string(bits) + " bit",
                         chunk_at);
      const std::size_t width = bits / 8;
      if (size % (width * channels) != 0) throw ParseError("data size not a whole number of frames", chunk_at);
      r.need(size, "sample data");
      const Index frames = Index(size / (width * channels));
      AudioBuffer a;
      a.sample_rate = rate;
      a.samples.resize(channels, frames);
      for (Index t = 0; t < frames; ++t)
        for (Index c = 0; c < channels; ++c)
          a.samples(c, t) = is_float ? r.f32("sample") : float(std::int16_t(r.u16("sample"))) / 32768.0f;
      return a;
    } else {
      r.str(size + (size & 1), "chunk body");
    }
  }
}

void write_wav(const std::string& path, const AudioBuffer& audio) { write_file(path, encode_wav(audio)); }

AudioBuffer read_wav(const std::string& path) {
  try {
    return decode_wav(read_file(path));
  } catch (const ParseError& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

}  // namespace bnc
