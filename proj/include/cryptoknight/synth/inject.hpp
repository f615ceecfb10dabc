#pragma once

// Injection of semantically neutral code at block boundaries: arithmetic on
// dead registers, wide-register junk, and short constant-bound loops.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/isa/analysis.hpp"
#include "cryptoknight/isa/rewriter.hpp"
#include "cryptoknight/isa/validate.hpp"

namespace cryptoknight::synth {

inline constexpr unsigned kMaxJunkLoopIterations = 64;

namespace detail {

using isa::Opcode;

inline isa::Imm small_imm(Rng& rng) { return isa::Imm{rng.below(0x100)}; }

/// Straight-line arithmetic on `t` (dead). Leaves flags alone unless `flags_free`.
inline void emit_arith_chain(isa::Rewriter& rw, Rng& rng, std::uint8_t t, std::uint8_t other, bool flags_free) {
  const isa::Reg reg = isa::r(t);
  rw.emit(isa::make(Opcode::mov, reg, isa::Imm{rng.next() >> rng.below(48)}));
  const unsigned ops = static_cast<unsigned>(rng.range(1, 4));
  for (unsigned k = 0; k < ops; ++k) {
    if (!flags_free || rng.chance(0.2)) {
      isa::Mem addr;
      addr.base = t;
      if (rng.chance(0.5)) {
        addr.index = other;
        addr.scale = static_cast<std::uint8_t>(1u << rng.below(4));
      }
      addr.disp = static_cast<std::int64_t>(rng.below(0x1000));
      rw.emit(isa::make(Opcode::lea, reg, addr));
      continue;
    }
    static constexpr Opcode kOps[] = {Opcode::add, Opcode::sub, Opcode::xor_, Opcode::and_, Opcode::or_,
                                      Opcode::shl, Opcode::shr, Opcode::inc,  Opcode::dec,  Opcode::test};
    const Opcode op = kOps[rng.below(std::size(kOps))];
    if (op == Opcode::inc || op == Opcode::dec) {
      rw.emit(isa::make(op, reg));
    } else if (op == Opcode::shl || op == Opcode::shr) {
      rw.emit(isa::make(op, reg, isa::Imm{static_cast<std::uint64_t>(rng.range(1, 31))}));
    } else {
      isa::Operand src = rng.chance(0.5) ? isa::Operand(small_imm(rng)) : isa::Operand(isa::r(other));
      rw.emit(isa::make(op, reg, src));
    }
  }
}

inline void emit_wide_junk(isa::Rewriter& rw, Rng& rng, std::uint8_t dead, std::uint8_t any) {
  if (rng.chance(0.5)) rw.emit(isa::make(Opcode::mov, isa::w(dead), isa::w(any)));
  else rw.emit(isa::make(Opcode::pxor, isa::w(dead), isa::w(dead)));
  const unsigned ops = static_cast<unsigned>(rng.range(1, 3));
  for (unsigned k = 0; k < ops; ++k) {
    rw.emit(isa::make(Opcode::pxor, isa::w(dead), isa::w(static_cast<std::uint8_t>(rng.below(isa::kWideRegisters)))));
  }
}

/// mov c, N / mov a, x / loop: ops on a; dec c; jnz loop. Needs c, a and flags dead.
inline void emit_junk_loop(isa::Rewriter& rw, Rng& rng, std::uint8_t c, std::uint8_t a) {
  const auto count = rng.range(2, kMaxJunkLoopIterations);
  rw.emit(isa::make(Opcode::mov, isa::r(c), isa::Imm{static_cast<std::uint64_t>(count)}));
  rw.emit(isa::make(Opcode::mov, isa::r(a), isa::Imm{rng.next() & 0xffffffff}));
  const auto head = rw.new_label();
  rw.bind(head);
  const unsigned ops = static_cast<unsigned>(rng.range(1, 3));
  for (unsigned k = 0; k < ops; ++k) {
    switch (rng.below(4)) {
      case 0: rw.emit(isa::make(Opcode::xor_, isa::r(a), isa::r(c))); break;
      case 1: rw.emit(isa::make(Opcode::add, isa::r(a), small_imm(rng))); break;
      case 2: rw.emit(isa::make(Opcode::shl, isa::r(a), isa::Imm{1})); break;
      default: rw.emit(isa::make(Opcode::shr, isa::r(a), isa::Imm{static_cast<std::uint64_t>(rng.range(1, 3))})); break;
    }
  }
  rw.emit(isa::make(Opcode::dec, isa::r(c)));
  rw.emit_to(isa::make_jcc(isa::Cond::nz, 0), head);
}

}  // namespace detail

/// Number of snippets for a given mean: 0 when mean <= 0, else 1 + Poisson(mean - 1).
inline unsigned injection_count(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  return 1 + rng.poisson(std::max(0.0, mean - 1.0));
}

/// Inserts neutral snippets at randomly chosen block leaders. Only resources
/// dead at the insertion point are written; junk loops go only where the code
/// runs once per entry (outside loops and subroutines).
inline isa::Program inject_arithmetic(const isa::Program& p, std::uint64_t seed, double mean) {
  isa::require_valid(p);
  Rng rng(seed);
  const unsigned count = injection_count(rng, mean);
  if (count == 0) return p;

  const auto leaders = isa::block_leaders(p);
  const auto looped = isa::loop_covered(p);
  const auto in_sub = isa::subroutine_code(p);
  const auto live = isa::compute_liveness(p);
  std::vector<std::uint32_t> sites;
  for (std::uint32_t i = 0; i < p.instructions.size(); ++i) {
    if (leaders[i]) sites.push_back(i);
  }
  std::vector<unsigned> at(p.instructions.size(), 0);
  for (unsigned k = 0; k < count; ++k) ++at[sites[rng.below(sites.size())]];

  isa::Rewriter rw(p);
  for (std::uint32_t i = 0; i < p.instructions.size(); ++i) {
    rw.bind_old(i);
    for (unsigned k = 0; k < at[i]; ++k) {
      const isa::RegSet busy = live.live_in[i];
      const bool flags_free = !(busy & isa::kFlagsBit);
      const auto scalars = isa::free_scalars(busy);
      const auto wides = isa::free_wides(busy);
      const bool loop_ok = flags_free && scalars.size() >= 2 && !looped[i] && !in_sub[i];
      const auto kind = rng.below(10);
      if (loop_ok && kind < 3) {
        auto pool = scalars;
        rng.shuffle(std::span(pool));
        detail::emit_junk_loop(rw, rng, pool[0], pool[1]);
      } else if (!wides.empty() && kind < 5) {
        const auto dead = wides[rng.below(wides.size())];
        const auto any = static_cast<std::uint8_t>(rng.below(isa::kWideRegisters));
        detail::emit_wide_junk(rw, rng, dead, any);
      } else if (!scalars.empty()) {
        const auto dead = scalars[rng.below(scalars.size())];
        const auto other = static_cast<std::uint8_t>(rng.below(isa::kScalarRegisters));
        detail::emit_arith_chain(rw, rng, dead, other, flags_free);
      }
    }
    rw.emit(p.instructions[i]);
  }
  return rw.finish();
}

}  // namespace cryptoknight::synth
