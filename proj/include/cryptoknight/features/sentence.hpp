#pragma once

// Trace blocks -> d x s sentence matrix. Row i of column j is the count of
// mnemonic i in block j times (1 + that block's entropy score).

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/isa/opcode.hpp"
#include "cryptoknight/tracer/trace.hpp"

namespace cryptoknight::features {

using isa::Opcode;

inline constexpr std::size_t kDefaultMaxS = 4096;

/// add, sub, inc, dec, shr, shl, and, or, xor, pxor, test, lea.
inline std::vector<Opcode> default_mnemonics() {
  std::vector<Opcode> out;
  for (std::size_t i = 0; i < isa::kWeightedCount; ++i) out.push_back(static_cast<Opcode>(i));
  return out;
}

struct FeatureConfig {
  std::vector<Opcode> mnemonics = default_mnemonics();
  std::size_t max_s = kDefaultMaxS;
  bool use_entropy = true;  // false zeroes every entropy score first
};

struct SentenceMatrix {
  std::size_t d = 0;
  std::size_t s = 0;
  std::vector<double> values;  // row-major d x s
  bool truncated = false;
  std::optional<std::string> label;

  double at(std::size_t row, std::size_t col) const { return values[row * s + col]; }
  bool operator==(const SentenceMatrix&) const = default;
};

inline void check_mnemonics(std::span<const Opcode> mnemonics) {
  if (mnemonics.empty()) throw ConfigError("mnemonic list is empty");
  std::array<bool, isa::kWeightedCount> seen{};
  for (auto op : mnemonics) {
    if (!isa::is_weighted(op)) throw ConfigError("mnemonic '" + std::string(isa::name_of(op)) + "' is not weighted");
    if (seen[isa::index_of(op)]) throw ConfigError("duplicate mnemonic '" + std::string(isa::name_of(op)) + "'");
    seen[isa::index_of(op)] = true;
  }
}

inline SentenceMatrix build_sentence_matrix(std::span<const tracer::BlockRecord> blocks, const FeatureConfig& config) {
  if (blocks.empty()) throw DataError("cannot build a sentence matrix from an empty block sequence");
  if (config.max_s == 0) throw ConfigError("max_s must be positive");
  check_mnemonics(config.mnemonics);
  SentenceMatrix m;
  m.d = config.mnemonics.size();
  m.s = std::min(blocks.size(), config.max_s);
  m.truncated = blocks.size() > config.max_s;
  m.values.assign(m.d * m.s, 0.0);
  for (std::size_t j = 0; j < m.s; ++j) {
    const auto& b = blocks[j];
    const double weight = 1.0 + (config.use_entropy ? b.entropy_score : 0.0);
    for (std::size_t i = 0; i < m.d; ++i) {
      m.values[i * m.s + j] = static_cast<double>(b.mnemonic_counts[isa::index_of(config.mnemonics[i])]) * weight;
    }
  }
  return m;
}

inline SentenceMatrix build_sentence_matrix(const tracer::Trace& trace, const FeatureConfig& config) {
  return build_sentence_matrix(trace.blocks, config);
}

/// Adds the block counts of one trace to a corpus-wide tally.
inline void tally_mnemonics(const tracer::Trace& trace, tracer::MnemonicCounts& totals) {
  for (const auto& b : trace.blocks) {
    for (std::size_t k = 0; k < isa::kWeightedCount; ++k) totals[k] += b.mnemonic_counts[k];
  }
}

/// The d most frequent weighted mnemonics of a tally; ties go to the lower opcode index.
inline std::vector<Opcode> select_mnemonics(const tracer::MnemonicCounts& totals, std::size_t d) {
  if (d == 0 || d > isa::kWeightedCount) {
    throw ConfigError("d must lie in [1, " + std::to_string(isa::kWeightedCount) + "]");
  }
  std::vector<std::size_t> order(isa::kWeightedCount);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return totals[a] > totals[b]; });
  std::vector<Opcode> out;
  for (std::size_t i = 0; i < d; ++i) out.push_back(static_cast<Opcode>(order[i]));
  return out;
}

inline std::vector<Opcode> select_mnemonics(std::span<const tracer::Trace> corpus, std::size_t d) {
  if (corpus.empty()) throw ConfigError("mnemonic selection needs a non-empty corpus");
  tracer::MnemonicCounts totals{};
  for (const auto& t : corpus) tally_mnemonics(t, totals);
  return select_mnemonics(totals, d);
}

inline std::vector<std::string> mnemonic_names(std::span<const Opcode> mnemonics) {
  std::vector<std::string> out;
  for (auto op : mnemonics) out.emplace_back(isa::name_of(op));
  return out;
}

inline std::vector<Opcode> mnemonics_from_names(std::span<const std::string> names) {
  std::vector<Opcode> out;
  for (const auto& n : names) {
    const auto op = isa::opcode_from_name(n);
    if (!op) throw ConfigError("unknown mnemonic '" + n + "'");
    out.push_back(*op);
  }
  check_mnemonics(out);
  return out;
}

}  // namespace cryptoknight::features
