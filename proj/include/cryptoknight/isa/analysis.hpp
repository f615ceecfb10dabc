#pragma once

// Static facts about a Program used by the rewriting passes: register
// use/def sets, control-flow successors, liveness, and block leaders.

#include <bit>
#include <cstdint>
#include <vector>

#include "cryptoknight/isa/program.hpp"

namespace cryptoknight::isa {

/// Bit set over machine resources: r0..r15, w0..w3, flags.
using RegSet = std::uint32_t;

inline constexpr RegSet kFlagsBit = RegSet{1} << 20;
inline constexpr RegSet kAllScalar = 0xffffu;
inline constexpr RegSet kAllWide = 0xfu << 16;

constexpr RegSet bit_of(Reg reg) {
  return reg.cls == RegClass::scalar ? RegSet{1} << reg.index : RegSet{1} << (16 + reg.index);
}

inline RegSet address_uses(const Mem& m) {
  RegSet s = 0;
  if (m.base) s |= RegSet{1} << *m.base;
  if (m.index) s |= RegSet{1} << *m.index;
  return s;
}

inline RegSet operand_reads(const Operand& op) {
  if (auto* reg = as_reg(op)) return bit_of(*reg);
  if (auto* m = as_mem(op)) return address_uses(*m);
  return 0;
}

inline RegSet uses_of(const Instruction& inst) {
  switch (inst.opcode) {
    case Opcode::add:
    case Opcode::sub:
    case Opcode::shr:
    case Opcode::shl:
    case Opcode::and_:
    case Opcode::or_:
    case Opcode::xor_:
    case Opcode::test:
    case Opcode::pxor:
      return operand_reads(inst.dst) | operand_reads(inst.src);
    case Opcode::inc:
    case Opcode::dec:
      return operand_reads(inst.dst);
    case Opcode::lea:
    case Opcode::mov:
    case Opcode::load:
      return operand_reads(inst.src);
    case Opcode::store:
      return operand_reads(inst.dst) | operand_reads(inst.src);
    case Opcode::jcc:
      return kFlagsBit;
    default:
      return 0;
  }
}

inline RegSet defs_of(const Instruction& inst) {
  RegSet s = 0;
  switch (inst.opcode) {
    case Opcode::test:
      break;
    case Opcode::store:
    case Opcode::jmp:
    case Opcode::jcc:
    case Opcode::call:
    case Opcode::ret:
    case Opcode::halt:
      return 0;
    default:
      if (auto* reg = as_reg(inst.dst)) s |= bit_of(*reg);
  }
  if (sets_flags(inst.opcode)) s |= kFlagsBit;
  return s;
}

/// Control-flow successors. Returns from a subroutine flow to every return site.
class ControlFlow {
 public:
  explicit ControlFlow(const Program& p) : succ_(p.instructions.size()) {
    const std::size_t n = p.instructions.size();
    std::vector<std::uint32_t> return_sites;
    for (std::size_t i = 0; i < n; ++i) {
      if (p.instructions[i].opcode == Opcode::call && i + 1 < n) return_sites.push_back(static_cast<std::uint32_t>(i + 1));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& inst = p.instructions[i];
      auto& s = succ_[i];
      const auto next = static_cast<std::uint32_t>(i + 1);
      switch (inst.opcode) {
        case Opcode::halt:
          break;
        case Opcode::ret:
          s = return_sites;
          break;
        case Opcode::jmp:
        case Opcode::call:
          s.push_back(std::get<Target>(inst.dst).addr);
          break;
        case Opcode::jcc:
          s.push_back(std::get<Target>(inst.dst).addr);
          if (next < n) s.push_back(next);
          break;
        default:
          if (next < n) s.push_back(next);
      }
    }
  }
  const std::vector<std::uint32_t>& successors(std::size_t i) const { return succ_[i]; }
  std::size_t size() const { return succ_.size(); }

 private:
  std::vector<std::vector<std::uint32_t>> succ_;
};

struct Liveness {
  std::vector<RegSet> live_in;
  std::vector<RegSet> live_out;
};

inline Liveness compute_liveness(const Program& p) {
  const ControlFlow cfg(p);
  const std::size_t n = p.instructions.size();
  std::vector<RegSet> uses(n), defs(n);
  for (std::size_t i = 0; i < n; ++i) {
    uses[i] = uses_of(p.instructions[i]);
    defs[i] = defs_of(p.instructions[i]);
  }
  Liveness lv{std::vector<RegSet>(n, 0), std::vector<RegSet>(n, 0)};
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = n; i-- > 0;) {
      RegSet out = 0;
      for (auto s : cfg.successors(i)) out |= lv.live_in[s];
      const RegSet in = uses[i] | (out & ~defs[i]);
      if (out != lv.live_out[i] || in != lv.live_in[i]) {
        lv.live_out[i] = out;
        lv.live_in[i] = in;
        changed = true;
      }
    }
  }
  return lv;
}

/// Static block leaders: entry, branch targets, and the instruction after any tail or halt.
inline std::vector<bool> block_leaders(const Program& p) {
  const std::size_t n = p.instructions.size();
  std::vector<bool> lead(n, false);
  if (n == 0) return lead;
  lead[0] = true;
  if (p.entry < n) lead[p.entry] = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = p.instructions[i];
    if (auto* t = as_target(inst.dst)) lead[t->addr] = true;
    if ((is_tail(inst.opcode) || inst.opcode == Opcode::halt) && i + 1 < n) lead[i + 1] = true;
  }
  return lead;
}

/// Addresses inside the span of some backward branch, i.e. possibly executed repeatedly.
inline std::vector<bool> loop_covered(const Program& p) {
  std::vector<bool> covered(p.instructions.size(), false);
  for (std::size_t b = 0; b < p.instructions.size(); ++b) {
    const auto& inst = p.instructions[b];
    if (inst.opcode != Opcode::jmp && inst.opcode != Opcode::jcc) continue;
    const auto t = std::get<Target>(inst.dst).addr;
    if (t > b) continue;
    for (std::size_t i = t; i <= b; ++i) covered[i] = true;
  }
  return covered;
}

/// Addresses reachable from a call target without leaving through ret.
inline std::vector<bool> subroutine_code(const Program& p) {
  const std::size_t n = p.instructions.size();
  std::vector<bool> mark(n, false);
  std::vector<std::uint32_t> work;
  for (const auto& inst : p.instructions) {
    if (inst.opcode == Opcode::call) work.push_back(std::get<Target>(inst.dst).addr);
  }
  while (!work.empty()) {
    const auto i = work.back();
    work.pop_back();
    if (i >= n || mark[i]) continue;
    mark[i] = true;
    const auto& inst = p.instructions[i];
    switch (inst.opcode) {
      case Opcode::ret:
      case Opcode::halt:
        break;
      case Opcode::jmp:
        work.push_back(std::get<Target>(inst.dst).addr);
        break;
      case Opcode::jcc:
        work.push_back(std::get<Target>(inst.dst).addr);
        work.push_back(i + 1);
        break;
      default:
        work.push_back(i + 1);
    }
  }
  return mark;
}

/// Scalar registers not in `busy`, ascending.
inline std::vector<std::uint8_t> free_scalars(RegSet busy) {
  std::vector<std::uint8_t> out;
  for (std::uint8_t i = 0; i < kScalarRegisters; ++i) {
    if (!(busy & (RegSet{1} << i))) out.push_back(i);
  }
  return out;
}

inline std::vector<std::uint8_t> free_wides(RegSet busy) {
  std::vector<std::uint8_t> out;
  for (std::uint8_t i = 0; i < kWideRegisters; ++i) {
    if (!(busy & (RegSet{1} << (16 + i)))) out.push_back(i);
  }
  return out;
}

}  // namespace cryptoknight::isa
