#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "cryptoknight/isa/program.hpp"

namespace cryptoknight::tracer {

using isa::kWeightedCount;
using isa::Opcode;

/// One memory write. The entropy fields describe the whole enclosing data
/// object immediately before and after the write.
struct WriteRecord {
  std::uint32_t object = 0;
  std::uint32_t offset = 0;
  std::uint8_t length = 0;
  std::array<std::uint8_t, isa::kWideBytes> old_bytes{};
  std::array<std::uint8_t, isa::kWideBytes> new_bytes{};
  double entropy_before = 0.0;
  double entropy_after = 0.0;
  bool operator==(const WriteRecord&) const = default;
};

struct TraceEvent {
  std::uint32_t addr = 0;
  Opcode opcode = Opcode::halt;
  bool is_head = false;
  bool is_tail = false;
  std::optional<WriteRecord> write;
  bool operator==(const TraceEvent&) const = default;
};

using MnemonicCounts = std::array<std::uint64_t, kWeightedCount>;

/// One carved basic block; immediate re-iterations are folded into loop_iters.
struct BlockRecord {
  std::uint32_t head_addr = 0;
  std::uint32_t tail_addr = 0;
  MnemonicCounts mnemonic_counts{};
  std::uint64_t length = 0;  // instructions in one iteration
  double entropy_score = 0.0;
  std::uint64_t loop_iters = 1;
  bool operator==(const BlockRecord&) const = default;
};

struct Trace {
  std::vector<TraceEvent> events;
  std::vector<BlockRecord> blocks;
  bool halted = false;
  std::uint64_t steps = 0;
  std::vector<isa::DataObject> final_memory;
  bool operator==(const Trace&) const = default;
};

}  // namespace cryptoknight::tracer
