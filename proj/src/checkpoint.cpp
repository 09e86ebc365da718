#include "bnc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace bnc {

namespace {

constexpr char kMagic[] = "BNCKPT01";
constexpr char kMetaMagic[] = "BNCMETA1";
constexpr char kWideSuffix[] = ":f64";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write to '" + path + "' failed");
}

void Archive::put(const std::string& name, Shape shape, Array<double> values, bool wide) {
  if (has(name)) throw DataError("duplicate checkpoint entry '" + name + "'");
  entries.push_back({name, std::move(shape), std::move(values), wide});
}

const ArchiveEntry& Archive::get(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e;
  throw DataError("checkpoint has no entry '" + name + "'");
}

bool Archive::has(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return true;
  return false;
}

const std::string& Archive::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw DataError("checkpoint metadata lacks '" + key + "'");
  return it->second;
}

Bytes serialize_archive(const Archive& archive) {
  Bytes out;
  ByteWriter w(out);
  w.str(std::string_view(kMagic, 8));
  w.u32(static_cast<std::uint32_t>(archive.entries.size()));
  for (const auto& e : archive.entries) {
    const std::string name = e.wide ? e.name + kWideSuffix : e.name;
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.str(name);
    w.u8(static_cast<std::uint8_t>(e.shape.size() + (e.wide ? 1 : 0)));
    for (Index d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    if (e.wide) {
      w.u32(2);
      for (Index i = 0; i < e.values.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &e.values[i], 8);
        w.u32(static_cast<std::uint32_t>(bits));
        w.u32(static_cast<std::uint32_t>(bits >> 32));
      }
    } else {
      for (Index i = 0; i < e.values.size(); ++i) w.f32(static_cast<float>(e.values[i]));
    }
  }
  w.str(std::string_view(kMetaMagic, 8));
  w.u32(static_cast<std::uint32_t>(archive.meta.size()));
  for (const auto& [k, v] : archive.meta) {
    w.u16(static_cast<std::uint16_t>(k.size()));
    w.str(k);
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.str(v);
  }
  return out;
}

Archive parse_archive(const Bytes& bytes) {
  ByteReader r(bytes);
  if (r.str(8, "checkpoint magic") != std::string_view(kMagic, 8)) throw ParseError("bad checkpoint magic", 0);
  Archive a;
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    const std::size_t at = r.offset();
    e.name = r.str(r.u16("entry name length"), "entry name");
    const std::uint8_t rank = r.u8("entry rank");
    for (std::uint8_t d = 0; d < rank; ++d) e.shape.push_back(r.u32("entry dims"));
    e.wide = ends_with(e.name, kWideSuffix);
    if (e.wide) {
      if (e.shape.empty() || e.shape.back() != 2) throw ParseError("64-bit entry without trailing dimension 2", at);
      e.name.resize(e.name.size() - std::strlen(kWideSuffix));
      e.shape.pop_back();
    }
    const Index n = numel(e.shape);
    e.values.resize(n);
    for (Index k = 0; k < n; ++k) {
      if (e.wide) {
        const std::uint64_t lo = r.u32("entry values"), hi = r.u32("entry values");
        const std::uint64_t bits = lo | (hi << 32);
        std::memcpy(&e.values[k], &bits, 8);
      } else {
        e.values[k] = r.f32("entry values");
      }
    }
    a.entries.push_back(std::move(e));
  }
  if (r.str(8, "metadata magic") != std::string_view(kMetaMagic, 8))
    throw ParseError("bad checkpoint metadata magic", r.offset() - 8);
  const std::uint32_t n_meta = r.u32("metadata count");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str(r.u16("metadata key length"), "metadata key");
    a.meta[k] = r.str(r.u32("metadata value length"), "metadata value");
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint", r.offset());
  return a;
}

void save_archive(const std::string& path, const Archive& archive) { write_file(path, serialize_archive(archive)); }

Archive load_archive(const std::string& path) {
  try {
    return parse_archive(read_file(path));
  } catch (const ParseError& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

}  // namespace bnc
