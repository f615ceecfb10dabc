#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/tracer/trace.hpp"

namespace cryptoknight::tracer {

/// Sum of |H(after) - H(before)| over the writes in `events`.
inline double score_block_entropy(std::span<const TraceEvent> events) {
  double score = 0.0;
  for (const auto& e : events) {
    if (e.write) score += std::fabs(e.write->entropy_after - e.write->entropy_before);
  }
  return score;
}

/// Partitions the event stream into head..tail runs, folding immediate
/// repetitions of the same block into one record.
inline std::vector<BlockRecord> carve_blocks(std::span<const TraceEvent> events) {
  std::vector<BlockRecord> blocks;
  std::size_t start = 0;
  bool prev_tail = true;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.is_tail != isa::is_tail(e.opcode)) {
      throw Error("malformed event stream: tail flag inconsistent at event " + std::to_string(i));
    }
    if (e.is_head != prev_tail) {
      throw Error("malformed event stream: head flag inconsistent at event " + std::to_string(i));
    }
    prev_tail = e.is_tail;
    if (!e.is_tail && i + 1 != events.size()) continue;

    const auto run = events.subspan(start, i + 1 - start);
    BlockRecord rec;
    rec.head_addr = run.front().addr;
    rec.tail_addr = run.back().addr;
    rec.length = run.size();
    for (const auto& ev : run) {
      if (isa::is_weighted(ev.opcode)) ++rec.mnemonic_counts[isa::index_of(ev.opcode)];
    }
    rec.entropy_score = score_block_entropy(run);

    if (!blocks.empty()) {
      auto& last = blocks.back();
      if (last.head_addr == rec.head_addr && last.tail_addr == rec.tail_addr && last.length == rec.length) {
        ++last.loop_iters;
        for (std::size_t k = 0; k < kWeightedCount; ++k) last.mnemonic_counts[k] += rec.mnemonic_counts[k];
        last.entropy_score += rec.entropy_score;
        start = i + 1;
        continue;
      }
    }
    blocks.push_back(rec);
    start = i + 1;
  }
  return blocks;
}

}  // namespace cryptoknight::tracer
