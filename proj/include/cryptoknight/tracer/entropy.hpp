#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

#include "cryptoknight/common/error.hpp"

namespace cryptoknight::tracer {

using Histogram = std::array<std::uint64_t, 256>;

/// H = sum p_k log2(1/p_k) over the byte-value histogram; empty bins contribute 0.
inline double entropy_from_histogram(const Histogram& counts, std::uint64_t total) {
  if (total == 0) throw Error("entropy of an empty buffer");
  const double n = static_cast<double>(total);
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h += p * std::log2(1.0 / p);
  }
  return h;
}

inline Histogram byte_histogram(std::span<const std::uint8_t> bytes) {
  Histogram counts{};
  for (auto b : bytes) ++counts[b];
  return counts;
}

/// Shannon entropy of a byte sequence, in bits per byte, within [0, 8].
inline double shannon_entropy(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error("entropy of an empty buffer");
  return entropy_from_histogram(byte_histogram(bytes), bytes.size());
}

}  // namespace cryptoknight::tracer
