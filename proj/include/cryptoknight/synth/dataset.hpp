#pragma once

// Balanced labelled corpora on disk:
//   <dir>/programs/NNNNNN.asm   one assembly file per sample
//   <dir>/manifest.jsonl        {index,label,obfuscation,codegen,seed,path} per line
//   <dir>/dataset.json          {master_seed,classes,class_counts,n,inject_mean}

#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/common/error.hpp"
#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/isa/assembler.hpp"
#include "cryptoknight/synth/spec.hpp"
#include "cryptoknight/synth/synthesize.hpp"

namespace cryptoknight::synth {

struct DatasetSample {
  std::size_t index = 0;
  SynthSpec spec;
  std::string path;  // relative to the dataset directory
};

struct DatasetManifest {
  std::uint64_t master_seed = 0;
  std::vector<Label> classes;
  std::vector<DatasetSample> samples;
  std::map<std::string, std::size_t> class_counts;
  double inject_mean = kDefaultInjectMean;
};

/// Sample i of a corpus: labels cycle through `classes`, all other choices
/// come from a seed derived from (master_seed, i).
inline SynthSpec sample_spec(std::span<const Label> classes, std::uint64_t master_seed, std::size_t index,
                             double inject_mean = kDefaultInjectMean) {
  if (classes.empty()) throw SynthError("no classes given");
  return random_spec(classes[index % classes.size()], derive_seed(master_seed, index), inject_mean);
}

inline std::string sample_path(std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "programs/%06zu.asm", index);
  return buf;
}

inline DatasetManifest plan_dataset(std::span<const Label> classes, std::size_t n, std::uint64_t master_seed,
                                    double inject_mean = kDefaultInjectMean) {
  if (classes.empty()) throw SynthError("no classes given");
  if (n < classes.size()) throw SynthError("n must be at least the number of classes");
  DatasetManifest m;
  m.master_seed = master_seed;
  m.classes.assign(classes.begin(), classes.end());
  m.inject_mean = inject_mean;
  for (auto c : classes) m.class_counts[std::string(tag_of(c))] = 0;
  for (std::size_t i = 0; i < n; ++i) {
    DatasetSample s{i, sample_spec(classes, master_seed, i, inject_mean), sample_path(i)};
    ++m.class_counts[std::string(tag_of(s.spec.label))];
    m.samples.push_back(std::move(s));
  }
  return m;
}

inline nlohmann::json manifest_record(const DatasetSample& s) {
  return nlohmann::json{
      {"index", s.index},
      {"label", tag_of(s.spec.label)},
      {"obfuscation", name_of(s.spec.obfuscation)},
      {"codegen",
       {{"rename_seed", s.spec.codegen.rename_seed},
        {"schedule_seed", s.spec.codegen.schedule_seed},
        {"unroll", s.spec.codegen.unroll}}},
      {"seed", s.spec.seed},
      {"path", s.path},
  };
}

/// Synthesizes every sample of the plan and writes the directory tree.
/// Returns the manifest; throws on the first synthesis or I/O failure.
inline DatasetManifest build_dataset(std::span<const Label> classes, std::size_t n, std::uint64_t master_seed,
                                     const std::filesystem::path& out_dir, double inject_mean = kDefaultInjectMean) {
  auto manifest = plan_dataset(classes, n, master_seed, inject_mean);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "programs", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "programs").string() + ": " + ec.message());
  std::string lines;
  for (const auto& s : manifest.samples) {
    write_text_file((out_dir / s.path).string(), isa::disassemble(synthesize(s.spec)));
    lines += manifest_record(s).dump() + "\n";
  }
  write_text_file((out_dir / "manifest.jsonl").string(), lines);
  nlohmann::json summary{{"master_seed", master_seed}, {"n", n}, {"inject_mean", inject_mean}};
  summary["classes"] = nlohmann::json::array();
  for (auto c : classes) summary["classes"].push_back(tag_of(c));
  summary["class_counts"] = manifest.class_counts;
  write_text_file((out_dir / "dataset.json").string(), summary.dump(2) + "\n");
  return manifest;
}

/// One line of manifest.jsonl, as read back for extraction.
struct ManifestEntry {
  std::size_t index = 0;
  std::string label;
  std::uint64_t seed = 0;
  std::string path;
};

struct ManifestFile {
  std::uint64_t master_seed = 0;
  std::vector<std::string> classes;
  std::vector<ManifestEntry> entries;
};

/// Reads dataset.json and manifest.jsonl from a dataset directory.
inline ManifestFile read_manifest(const std::filesystem::path& dir) {
  ManifestFile mf;
  try {
    const auto summary = nlohmann::json::parse(read_text_file((dir / "dataset.json").string()));
    mf.master_seed = summary.at("master_seed").get<std::uint64_t>();
    mf.classes = summary.at("classes").get<std::vector<std::string>>();
    std::istringstream lines(read_text_file((dir / "manifest.jsonl").string()));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      mf.entries.push_back({rec.at("index").get<std::size_t>(), rec.at("label").get<std::string>(),
                            rec.at("seed").get<std::uint64_t>(), rec.at("path").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (mf.classes.empty()) throw DataError("manifest lists no classes");
  return mf;
}

}  // namespace cryptoknight::synth
