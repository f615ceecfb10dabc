#pragma once

// Compiler-like variation: scalar register renaming, loop unrolling and
// dependency-respecting list scheduling inside basic blocks.

#include <array>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/isa/analysis.hpp"
#include "cryptoknight/isa/rewriter.hpp"
#include "cryptoknight/isa/validate.hpp"
#include "cryptoknight/synth/spec.hpp"

namespace cryptoknight::synth {

using RegisterMap = std::array<std::uint8_t, isa::kScalarRegisters>;

/// A uniformly random permutation of r0..r15; seed 0 gives the identity.
inline RegisterMap rename_map(std::uint64_t seed) {
  RegisterMap map;
  std::iota(map.begin(), map.end(), std::uint8_t{0});
  if (seed != 0) {
    Rng rng(seed);
    rng.shuffle(std::span<std::uint8_t>(map));
  }
  return map;
}

inline isa::Program rename_registers(const isa::Program& p, const RegisterMap& map) {
  isa::Program out = p;
  auto fix = [&](isa::Operand& op) {
    if (auto* reg = std::get_if<isa::Reg>(&op); reg && reg->cls == isa::RegClass::scalar) reg->index = map[reg->index];
    if (auto* m = std::get_if<isa::Mem>(&op)) {
      if (m->base) m->base = map[*m->base];
      if (m->index) m->index = map[*m->index];
    }
  };
  for (auto& inst : out.instructions) {
    fix(inst.dst);
    fix(inst.src);
  }
  return out;
}

namespace detail {

struct SimpleLoop {
  std::uint32_t head = 0;  // first body instruction, the branch target
  std::uint32_t back = 0;  // the backward jcc
  bool counted = false;    // preceded by `mov rc, N` and closed by `dec rc; jnz`
  std::uint8_t counter = 0;
  std::uint64_t trips = 0;
};

/// Single-block loops: a backward jcc whose body has no other control flow
/// and no entry except its head.
inline std::vector<SimpleLoop> find_simple_loops(const isa::Program& p) {
  using isa::Opcode;
  const auto n = static_cast<std::uint32_t>(p.instructions.size());
  std::vector<unsigned> incoming(n, 0);
  for (const auto& inst : p.instructions) {
    if (auto* t = isa::as_target(inst.dst)) ++incoming[t->addr];
  }
  std::vector<SimpleLoop> loops;
  for (std::uint32_t b = 0; b < n; ++b) {
    const auto& br = p.instructions[b];
    if (br.opcode != Opcode::jcc) continue;
    const auto t = std::get<isa::Target>(br.dst).addr;
    if (t > b || incoming[t] != 1 || (p.entry > t && p.entry <= b)) continue;
    bool simple = true;
    for (std::uint32_t i = t; i < b && simple; ++i) {
      const auto op = p.instructions[i].opcode;
      if (isa::is_tail(op) || op == Opcode::halt) simple = false;
      if (i > t && incoming[i] != 0) simple = false;
    }
    if (!simple) continue;
    SimpleLoop loop{t, b};
    if (br.cond == isa::Cond::nz && b > t && t > 0 && incoming[t - 1] == 0 && p.entry != t) {
      const auto& dec = p.instructions[b - 1];
      const auto& init = p.instructions[t - 1];
      const auto* rc = isa::as_reg(dec.dst);
      const auto* init_reg = isa::as_reg(init.dst);
      const auto* trips = std::get_if<isa::Imm>(&init.src);
      if (dec.opcode == Opcode::dec && rc && rc->cls == isa::RegClass::scalar && init.opcode == Opcode::mov &&
          init_reg && *init_reg == *rc && trips && trips->value > 0) {
        const auto bit = isa::bit_of(*rc);
        bool untouched = true;
        for (std::uint32_t i = t; i + 1 < b; ++i) {
          const auto& inst = p.instructions[i];
          if ((isa::uses_of(inst) | isa::defs_of(inst)) & bit) untouched = false;
        }
        if (untouched) {
          loop.counted = true;
          loop.counter = rc->index;
          loop.trips = trips->value;
        }
      }
    }
    loops.push_back(loop);
  }
  return loops;
}

}  // namespace detail

/// Unrolls every single-block loop by `factor`. Counted loops whose trip
/// count reaches the factor get a peeled remainder and an F-times body;
/// other loops keep one exit test per body copy.
inline isa::Program unroll_loops(const isa::Program& p, unsigned factor) {
  if (factor != 1 && factor != 2 && factor != 4) throw SynthError("unroll factor must be 1, 2 or 4");
  if (factor == 1) return p;
  using isa::Opcode;
  const auto loops = detail::find_simple_loops(p);
  const auto n = static_cast<std::uint32_t>(p.instructions.size());
  std::vector<const detail::SimpleLoop*> starting(n, nullptr);
  for (const auto& loop : loops) {
    const bool use_counted = loop.counted && loop.trips >= factor;
    starting[use_counted ? loop.head - 1 : loop.head] = &loop;
  }

  isa::Rewriter rw(p);
  for (std::uint32_t i = 0; i < n;) {
    const auto* loop = starting[i];
    if (!loop) {
      rw.copy(i++);
      continue;
    }
    const auto body_begin = loop->head;
    if (loop->counted && i + 1 == loop->head) {
      const auto body_end = loop->back - 1;  // excludes dec + jnz
      auto emit_body = [&] {
        for (auto k = body_begin; k < body_end; ++k) rw.emit(p.instructions[k]);
      };
      rw.bind_old(i);
      for (std::uint64_t k = 0; k < loop->trips % factor; ++k) emit_body();
      rw.emit(isa::make(Opcode::mov, isa::r(loop->counter), isa::Imm{loop->trips / factor}));
      rw.bind_old(loop->head);
      const auto head = rw.new_label();
      rw.bind(head);
      for (unsigned f = 0; f < factor; ++f) emit_body();
      rw.emit(p.instructions[loop->back - 1]);
      rw.emit_to(p.instructions[loop->back], head);
    } else {
      const auto& br = p.instructions[loop->back];
      const auto head = rw.new_label();
      const auto exit = rw.new_label();
      rw.bind_old(loop->head);
      rw.bind(head);
      for (unsigned f = 0; f < factor; ++f) {
        for (auto k = body_begin; k < loop->back; ++k) rw.emit(p.instructions[k]);
        if (f + 1 < factor) rw.emit_to(isa::make_jcc(isa::invert(br.cond), 0), exit);
      }
      rw.emit_to(br, head);
      rw.bind(exit);
    }
    i = loop->back + 1;
  }
  return rw.finish();
}

inline bool may_reorder(const isa::Instruction& a, const isa::Instruction& b) {
  const auto ua = isa::uses_of(a), da = isa::defs_of(a);
  const auto ub = isa::uses_of(b), db = isa::defs_of(b);
  if ((da & (ub | db)) || (ua & db)) return false;
  const auto* ma = isa::mem_operand(a);
  const auto* mb = isa::mem_operand(b);
  const bool acc_a = ma && ma->object, acc_b = mb && mb->object;
  if (acc_a && acc_b && *ma->object == *mb->object) {
    if (a.opcode == isa::Opcode::store || b.opcode == isa::Opcode::store) return false;
  }
  return true;
}

/// Random topological order of each basic block's dependence graph. The
/// block's control-transfer instruction stays last.
inline isa::Program schedule_blocks(const isa::Program& p, std::uint64_t seed) {
  if (seed == 0) return p;
  Rng rng(seed);
  const auto leaders = isa::block_leaders(p);
  const auto n = static_cast<std::uint32_t>(p.instructions.size());
  isa::Rewriter rw(p);
  std::uint32_t start = 0;
  while (start < n) {
    std::uint32_t end = start;  // one past the schedulable range
    while (end < n && (end == start || !leaders[end])) {
      const auto op = p.instructions[end].opcode;
      if (isa::is_tail(op) || op == isa::Opcode::halt) break;
      ++end;
    }
    const std::uint32_t len = end - start;
    std::vector<std::vector<std::uint32_t>> succ(len);
    std::vector<unsigned> preds(len, 0);
    for (std::uint32_t a = 0; a < len; ++a) {
      for (std::uint32_t b = a + 1; b < len; ++b) {
        if (!may_reorder(p.instructions[start + a], p.instructions[start + b])) {
          succ[a].push_back(b);
          ++preds[b];
        }
      }
    }
    std::vector<std::uint32_t> ready;
    for (std::uint32_t a = 0; a < len; ++a) {
      if (preds[a] == 0) ready.push_back(a);
    }
    if (len > 0) rw.bind_old(start);
    while (!ready.empty()) {
      const auto pick = rng.below(ready.size());
      const auto a = ready[pick];
      ready.erase(ready.begin() + static_cast<std::ptrdiff_t>(pick));
      rw.emit(p.instructions[start + a]);
      for (auto b : succ[a]) {
        if (--preds[b] == 0) ready.push_back(b);
      }
    }
    if (end < n && (len == 0 || !leaders[end])) {
      rw.copy(end);  // block terminator
      ++end;
    }
    start = end;
  }
  return rw.finish();
}

/// rename -> unroll -> schedule.
inline isa::Program codegen_variants(const isa::Program& p, const CodegenOptions& opts) {
  if (opts.unroll != 1 && opts.unroll != 2 && opts.unroll != 4) throw SynthError("unroll factor must be 1, 2 or 4");
  isa::require_valid(p);
  isa::Program out = p;
  if (opts.rename_seed != 0) out = rename_registers(out, rename_map(opts.rename_seed));
  out = unroll_loops(out, opts.unroll);
  out = schedule_blocks(out, opts.schedule_seed);
  isa::require_valid(out);
  return out;
}

}  // namespace cryptoknight::synth
