#pragma once

// Feature container: one file holding a fixed header and length-prefixed
// sentence-matrix records, 64-bit little-endian floats, sealed with a CRC32.
//
//   "CKDS" u32 version, u64 d, u64 master_seed, u8 use_entropy, u64 max_s,
//   u32 n_classes + str each, u32 n_mnemonics + str each, u64 n_records,
//   records: u64 byte_length, then str label, u64 index, u64 d, u64 s,
//            u8 truncated, d*s f64 values.

#include <algorithm>
#include <string>
#include <vector>

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/common/error.hpp"
#include "cryptoknight/dcnn/train.hpp"
#include "cryptoknight/features/sentence.hpp"

namespace cryptoknight::harness {

inline constexpr std::uint32_t kContainerMagic = 0x53444b43;  // "CKDS"
inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerRecord {
  std::string label;
  std::size_t index = 0;  // sample index in the originating manifest
  features::SentenceMatrix matrix;
  bool operator==(const ContainerRecord&) const = default;
};

struct DatasetContainer {
  std::size_t d = 0;
  std::uint64_t master_seed = 0;
  std::vector<std::string> classes;
  std::vector<std::string> mnemonics;
  bool use_entropy = true;
  std::size_t max_s = features::kDefaultMaxS;
  std::vector<ContainerRecord> records;
  bool operator==(const DatasetContainer&) const = default;

  std::size_t class_index(const std::string& tag) const {
    const auto it = std::find(classes.begin(), classes.end(), tag);
    if (it == classes.end()) throw DataError("label '" + tag + "' is not in the container's class list");
    return static_cast<std::size_t>(it - classes.begin());
  }
};

inline void check_container(const DatasetContainer& c) {
  if (c.d == 0 || c.mnemonics.size() != c.d) throw DataError("container d does not match its mnemonic list");
  if (c.classes.empty()) throw DataError("container has no classes");
  for (const auto& r : c.records) {
    if (r.matrix.d != c.d) throw DataError("record d does not match the container header");
    if (r.matrix.values.size() != r.matrix.d * r.matrix.s) throw DataError("record value count does not match d x s");
    c.class_index(r.label);
  }
}

inline Bytes encode_container(const DatasetContainer& c) {
  check_container(c);
  ByteWriter w;
  w.u32(kContainerMagic);
  w.u32(kContainerVersion);
  w.u64(c.d);
  w.u64(c.master_seed);
  w.u8(c.use_entropy ? 1 : 0);
  w.u64(c.max_s);
  w.u32(static_cast<std::uint32_t>(c.classes.size()));
  for (const auto& s : c.classes) w.str(s);
  w.u32(static_cast<std::uint32_t>(c.mnemonics.size()));
  for (const auto& s : c.mnemonics) w.str(s);
  w.u64(c.records.size());
  for (const auto& r : c.records) {
    ByteWriter rec;
    rec.str(r.label);
    rec.u64(r.index);
    rec.u64(r.matrix.d);
    rec.u64(r.matrix.s);
    rec.u8(r.matrix.truncated ? 1 : 0);
    for (double v : r.matrix.values) rec.f64(v);
    w.u64(rec.size());
    w.raw(rec.bytes());
  }
  w.seal();
  return std::move(w.bytes());
}

inline DatasetContainer decode_container(std::span<const std::uint8_t> bytes) {
  ByteReader r(check_sealed(bytes));
  if (r.u32() != kContainerMagic) throw DataError("not a dataset container");
  if (const auto v = r.u32(); v != kContainerVersion) {
    throw DataError("unsupported container version " + std::to_string(v));
  }
  DatasetContainer c;
  c.d = r.u64();
  c.master_seed = r.u64();
  c.use_entropy = r.u8() != 0;
  c.max_s = r.u64();
  for (auto n = r.u32(); n > 0; --n) c.classes.push_back(r.str());
  for (auto n = r.u32(); n > 0; --n) c.mnemonics.push_back(r.str());
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.u64();
    const auto start = r.position();
    ContainerRecord rec;
    rec.label = r.str();
    rec.index = r.u64();
    rec.matrix.d = r.u64();
    rec.matrix.s = r.u64();
    rec.matrix.truncated = r.u8() != 0;
    if (rec.matrix.d != c.d) throw DataError("record d does not match the container header");
    if (rec.matrix.s > r.remaining() / 8 / std::max<std::size_t>(rec.matrix.d, 1)) throw DataError("truncated record");
    rec.matrix.values.resize(rec.matrix.d * rec.matrix.s);
    for (auto& v : rec.matrix.values) v = r.f64();
    rec.matrix.label = rec.label;
    if (r.position() - start != len) throw DataError("record length prefix does not match its contents");
    c.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw DataError("trailing bytes after the last record");
  check_container(c);
  return c;
}

inline void save_container(const std::string& path, const DatasetContainer& c) { write_file(path, encode_container(c)); }
inline DatasetContainer load_container(const std::string& path) { return decode_container(read_file(path)); }

inline dcnn::LabelledSet labelled_set(const DatasetContainer& c) {
  dcnn::LabelledSet set;
  for (const auto& r : c.records) {
    set.inputs.push_back(r.matrix);
    set.labels.push_back(c.class_index(r.label));
  }
  return set;
}

}  // namespace cryptoknight::harness
