#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/isa/validate.hpp"
#include "cryptoknight/tracer/blocks.hpp"
#include "cryptoknight/tracer/entropy.hpp"
#include "cryptoknight/tracer/trace.hpp"

namespace cryptoknight::tracer {

inline constexpr std::size_t kMaxCallDepth = 4096;

/// Interpreter state for one run. Owns a private copy of every data object.
class Machine {
 public:
  explicit Machine(const isa::Program& program) : program_(program) {
    for (const auto& obj : program.data_objects) {
      memory_.push_back(obj.bytes);
      histograms_.push_back(byte_histogram(obj.bytes));
      entropy_.push_back(entropy_from_histogram(histograms_.back(), obj.bytes.size()));
    }
    pc_ = program.entry;
  }

  /// Runs until halt or `step_limit` instructions, recording one event per step.
  Trace run(std::uint64_t step_limit) {
    Trace trace;
    bool prev_tail = true;
    const std::size_t n = program_.instructions.size();
    while (trace.steps < step_limit) {
      if (pc_ >= n) throw ExecutionError("program counter ran past the last instruction");
      const auto& inst = program_.instructions[pc_];
      TraceEvent ev;
      ev.addr = pc_;
      ev.opcode = inst.opcode;
      ev.is_head = prev_tail;
      ev.is_tail = isa::is_tail(inst.opcode);
      prev_tail = ev.is_tail;
      const bool halted = step(inst, ev);
      trace.events.push_back(ev);
      ++trace.steps;
      if (halted) {
        trace.halted = true;
        break;
      }
    }
    trace.blocks = carve_blocks(trace.events);
    trace.final_memory = program_.data_objects;
    for (std::size_t i = 0; i < memory_.size(); ++i) trace.final_memory[i].bytes = memory_[i];
    return trace;
  }

  std::uint64_t reg(unsigned i) const { return regs_[i]; }

 private:
  using Wide = std::array<std::uint8_t, isa::kWideBytes>;

  std::uint64_t value_of(const isa::Operand& op) const {
    if (auto* reg = isa::as_reg(op)) return regs_[reg->index];
    return std::get<isa::Imm>(op).value;
  }

  std::uint64_t effective(const isa::Mem& m) const {
    std::uint64_t a = static_cast<std::uint64_t>(m.disp);
    if (m.base) a += regs_[*m.base];
    if (m.index) a += regs_[*m.index] * m.scale;
    return a;
  }

  std::uint8_t* locate(const isa::Mem& m, bool for_write) {
    const auto obj = *m.object;
    auto& bytes = memory_[obj];
    const std::uint64_t off = effective(m);
    const unsigned width = isa::bytes_of(m.width);
    if (off > bytes.size() || bytes.size() - off < width) {
      throw ExecutionError("out-of-bounds access to '" + program_.data_objects[obj].name + "' at offset " +
                           std::to_string(static_cast<std::int64_t>(off)) + " (pc " + std::to_string(pc_) + ")");
    }
    if (for_write && !program_.data_objects[obj].is_mutable) {
      throw ExecutionError("write to immutable object '" + program_.data_objects[obj].name + "' (pc " +
                           std::to_string(pc_) + ")");
    }
    return bytes.data() + off;
  }

  void write(const isa::Mem& m, const std::uint8_t* src, TraceEvent& ev) {
    std::uint8_t* dst = locate(m, true);
    const unsigned width = isa::bytes_of(m.width);
    const auto obj = *m.object;
    WriteRecord rec;
    rec.object = obj;
    rec.offset = static_cast<std::uint32_t>(dst - memory_[obj].data());
    rec.length = static_cast<std::uint8_t>(width);
    std::memcpy(rec.old_bytes.data(), dst, width);
    std::memcpy(rec.new_bytes.data(), src, width);
    rec.entropy_before = entropy_[obj];
    bool changed = false;
    auto& hist = histograms_[obj];
    for (unsigned i = 0; i < width; ++i) {
      if (dst[i] == src[i]) continue;
      --hist[dst[i]];
      ++hist[src[i]];
      changed = true;
    }
    std::memcpy(dst, src, width);
    if (changed) entropy_[obj] = entropy_from_histogram(hist, memory_[obj].size());
    rec.entropy_after = entropy_[obj];
    ev.write = rec;
  }

  void set_flags(std::uint64_t result, bool carry) {
    zero_ = result == 0;
    carry_ = carry;
  }

  bool condition(isa::Cond c) const {
    switch (c) {
      case isa::Cond::z: return zero_;
      case isa::Cond::nz: return !zero_;
      case isa::Cond::c: return carry_;
      case isa::Cond::nc: return !carry_;
      case isa::Cond::a: return !carry_ && !zero_;
      case isa::Cond::be: return carry_ || zero_;
    }
    return false;
  }

  /// Executes one instruction. Returns true on halt.
  bool step(const isa::Instruction& inst, TraceEvent& ev) {
    using isa::Opcode;
    std::uint32_t next = pc_ + 1;
    auto dst_reg = [&]() -> std::uint64_t& { return regs_[std::get<isa::Reg>(inst.dst).index]; };
    switch (inst.opcode) {
      case Opcode::add: {
        auto& d = dst_reg();
        const std::uint64_t s = value_of(inst.src);
        const std::uint64_t r = d + s;
        set_flags(r, r < d);
        d = r;
        break;
      }
      case Opcode::sub: {
        auto& d = dst_reg();
        const std::uint64_t s = value_of(inst.src);
        const std::uint64_t r = d - s;
        set_flags(r, d < s);
        d = r;
        break;
      }
      case Opcode::inc: {
        auto& d = dst_reg();
        ++d;
        set_flags(d, d == 0);
        break;
      }
      case Opcode::dec: {
        auto& d = dst_reg();
        const bool borrow = d == 0;
        --d;
        set_flags(d, borrow);
        break;
      }
      case Opcode::shr: {
        auto& d = dst_reg();
        d >>= (value_of(inst.src) & 63);
        set_flags(d, false);
        break;
      }
      case Opcode::shl: {
        auto& d = dst_reg();
        d <<= (value_of(inst.src) & 63);
        set_flags(d, false);
        break;
      }
      case Opcode::and_: {
        auto& d = dst_reg();
        d &= value_of(inst.src);
        set_flags(d, false);
        break;
      }
      case Opcode::or_: {
        auto& d = dst_reg();
        d |= value_of(inst.src);
        set_flags(d, false);
        break;
      }
      case Opcode::xor_: {
        auto& d = dst_reg();
        d ^= value_of(inst.src);
        set_flags(d, false);
        break;
      }
      case Opcode::test:
        set_flags(regs_[std::get<isa::Reg>(inst.dst).index] & value_of(inst.src), false);
        break;
      case Opcode::pxor: {
        auto& d = wide_[std::get<isa::Reg>(inst.dst).index];
        const auto& s = wide_[std::get<isa::Reg>(inst.src).index];
        for (std::size_t i = 0; i < d.size(); ++i) d[i] ^= s[i];
        break;
      }
      case Opcode::lea:
        dst_reg() = effective(std::get<isa::Mem>(inst.src));
        break;
      case Opcode::mov: {
        const auto& d = std::get<isa::Reg>(inst.dst);
        if (d.cls == isa::RegClass::wide) wide_[d.index] = wide_[std::get<isa::Reg>(inst.src).index];
        else regs_[d.index] = value_of(inst.src);
        break;
      }
      case Opcode::load: {
        const auto& m = std::get<isa::Mem>(inst.src);
        const std::uint8_t* p = locate(m, false);
        const auto& d = std::get<isa::Reg>(inst.dst);
        if (d.cls == isa::RegClass::wide) {
          std::memcpy(wide_[d.index].data(), p, isa::kWideBytes);
        } else {
          std::uint64_t v = 0;
          for (unsigned i = isa::bytes_of(m.width); i-- > 0;) v = v << 8 | p[i];
          regs_[d.index] = v;
        }
        break;
      }
      case Opcode::store: {
        const auto& m = std::get<isa::Mem>(inst.dst);
        std::array<std::uint8_t, isa::kWideBytes> buf{};
        if (auto* reg = isa::as_reg(inst.src); reg && reg->cls == isa::RegClass::wide) {
          buf = wide_[reg->index];
        } else {
          std::uint64_t v = value_of(inst.src);
          for (unsigned i = 0; i < 8; ++i, v >>= 8) buf[i] = static_cast<std::uint8_t>(v & 0xff);
        }
        write(m, buf.data(), ev);
        break;
      }
      case Opcode::jmp:
        next = std::get<isa::Target>(inst.dst).addr;
        break;
      case Opcode::jcc:
        if (condition(inst.cond)) next = std::get<isa::Target>(inst.dst).addr;
        break;
      case Opcode::call:
        if (stack_.size() >= kMaxCallDepth) throw ExecutionError("call stack overflow");
        stack_.push_back(pc_ + 1);
        next = std::get<isa::Target>(inst.dst).addr;
        break;
      case Opcode::ret:
        if (stack_.empty()) throw ExecutionError("ret with empty call stack (pc " + std::to_string(pc_) + ")");
        next = stack_.back();
        stack_.pop_back();
        break;
      case Opcode::halt:
        return true;
    }
    pc_ = next;
    return false;
  }

  const isa::Program& program_;
  std::array<std::uint64_t, isa::kScalarRegisters> regs_{};
  std::array<Wide, isa::kWideRegisters> wide_{};
  bool zero_ = false;
  bool carry_ = false;
  std::uint32_t pc_ = 0;
  std::vector<std::uint32_t> stack_;
  std::vector<Bytes> memory_;
  std::vector<Histogram> histograms_;
  std::vector<double> entropy_;
};

/// Runs `p` for at most `step_limit` instructions and carves its blocks.
/// Faults (bounds, immutable writes, stack misuse) throw ExecutionError.
inline Trace execute(const isa::Program& p, std::uint64_t step_limit) {
  isa::require_valid(p);
  if (step_limit == 0) throw Error("step_limit must be positive");
  return Machine(p).run(step_limit);
}

/// Final contents of a named data object in a finished trace.
inline const Bytes& object_bytes(const Trace& t, std::string_view name) {
  for (const auto& obj : t.final_memory) {
    if (obj.name == name) return obj.bytes;
  }
  throw Error("no data object named '" + std::string(name) + "'");
}

}  // namespace cryptoknight::tracer
