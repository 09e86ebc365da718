#pragma once

// Flat container of named arrays.
//
//   "BNCKPT01" | u32 entry count | entries... | "BNCMETA1" | u32 n | (u16 key, u32 value)...
//   entry: u16 name length, UTF-8 name, u8 rank, u32 dims[rank], f32 values (LE)
//
// Arrays held at 64-bit precision are stored losslessly: the entry name gets
// the suffix ":f64", a trailing dimension of 2 is appended, and each double's
// bit pattern is written as two 32-bit words (low word first).

#include <map>
#include <string>
#include <vector>

#include "bnc/bytes.hpp"
#include "bnc/tensor.hpp"

namespace bnc {

struct ArchiveEntry {
  std::string name;
  Shape shape;
  Array<double> values;
  bool wide = false;  // keep full 64-bit precision
};

struct Archive {
  std::vector<ArchiveEntry> entries;
  std::map<std::string, std::string> meta;

  template <typename Scalar>
  void put(const std::string& name, const Tensor<Scalar>& t) {
    put(name, t.shape(), t.data().template cast<double>(), sizeof(Scalar) == 8);
  }
  void put(const std::string& name, Shape shape, Array<double> values, bool wide);

  const ArchiveEntry& get(const std::string& name) const;
  bool has(const std::string& name) const;

  // Copies an entry into an existing tensor of identical shape.
  template <typename Scalar>
  void load_into(const std::string& name, const Tensor<Scalar>& t) const {
    const auto& e = get(name);
    if (e.shape != t.shape())
      throw DataError("checkpoint entry '" + name + "' has shape " + to_string(e.shape) + ", expected " +
                      to_string(t.shape()));
    t.mutable_data() = e.values.cast<Scalar>();
  }
  const std::string& meta_at(const std::string& key) const;
};

Bytes serialize_archive(const Archive& archive);
Archive parse_archive(const Bytes& bytes);
void save_archive(const std::string& path, const Archive& archive);
Archive load_archive(const std::string& path);

}  // namespace bnc
