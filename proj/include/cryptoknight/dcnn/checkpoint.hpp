#pragma once

// Model checkpoint: magic, version, a JSON header describing the model and
// the feature pipeline it was trained on, then the raw f64 parameters, sealed
// with a CRC32.

#include <string>
#include <vector>

#include "json.hpp"

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/common/error.hpp"
#include "cryptoknight/dcnn/config.hpp"
#include "cryptoknight/dcnn/model.hpp"
#include "cryptoknight/features/sentence.hpp"

namespace cryptoknight::dcnn {

inline constexpr std::uint32_t kCheckpointMagic = 0x4e4e4b43;  // "CKNN"
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> classes;
  features::FeatureConfig features;
  std::vector<double> params;
};

inline Bytes encode_checkpoint(const Checkpoint& ck) {
  if (ck.classes.size() != ck.config.classes) throw DataError("class names do not match the model's output count");
  if (ck.features.mnemonics.size() != ck.config.d) throw DataError("mnemonic count does not match the model's d");
  if (ck.params.size() != layout_of(ck.config).total) throw DataError("parameter count does not match the model");
  const nlohmann::json header{{"model", to_json(ck.config)},
                              {"classes", ck.classes},
                              {"mnemonics", features::mnemonic_names(ck.features.mnemonics)},
                              {"use_entropy", ck.features.use_entropy},
                              {"max_s", ck.features.max_s}};
  ByteWriter w;
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.str(header.dump());
  w.u64(ck.params.size());
  for (double v : ck.params) w.f64(v);
  w.seal();
  return std::move(w.bytes());
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(check_sealed(bytes));
  if (r.u32() != kCheckpointMagic) throw DataError("not a checkpoint file");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(r.str());
    ck.config = model_config_from_json(header.at("model"), ModelConfig{});
    ck.classes = header.at("classes").get<std::vector<std::string>>();
    ck.features.mnemonics = features::mnemonics_from_names(header.at("mnemonics").get<std::vector<std::string>>());
    ck.features.use_entropy = header.at("use_entropy").get<bool>();
    ck.features.max_s = header.at("max_s").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("invalid checkpoint header: ") + e.what());
  }
  if (ck.classes.size() != ck.config.classes || ck.features.mnemonics.size() != ck.config.d) {
    throw DataError("checkpoint header is inconsistent");
  }
  const auto n = r.u64();
  if (n != layout_of(ck.config).total) throw DataError("checkpoint parameter count does not match its model shape");
  if (r.remaining() != n * 8) throw DataError("checkpoint parameter block has the wrong length");
  ck.params.resize(n);
  for (auto& v : ck.params) v = r.f64();
  return ck;
}

inline Checkpoint make_checkpoint(const Model& model, std::vector<std::string> classes,
                                  const features::FeatureConfig& features) {
  return Checkpoint{model.config(), std::move(classes), features,
                    std::vector<double>(model.params().begin(), model.params().end())};
}

inline Model model_of(const Checkpoint& ck) { return Model(ck.config, ck.params); }

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }
inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace cryptoknight::dcnn
