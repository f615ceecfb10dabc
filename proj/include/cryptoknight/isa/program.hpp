#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/isa/opcode.hpp"

namespace cryptoknight::isa {

inline constexpr unsigned kScalarRegisters = 16;
inline constexpr unsigned kWideRegisters = 4;
inline constexpr unsigned kWideBytes = 16;

enum class RegClass : std::uint8_t { scalar, wide };

struct Reg {
  RegClass cls = RegClass::scalar;
  std::uint8_t index = 0;
  bool operator==(const Reg&) const = default;
};

constexpr Reg r(unsigned i) { return Reg{RegClass::scalar, static_cast<std::uint8_t>(i)}; }
constexpr Reg w(unsigned i) { return Reg{RegClass::wide, static_cast<std::uint8_t>(i)}; }

/// Access width of a memory operand; `none` marks a bare address expression (lea).
enum class Width : std::uint8_t { none = 0, byte = 1, word = 2, dword = 4, qword = 8, oword = 16 };

constexpr unsigned bytes_of(Width wd) { return static_cast<unsigned>(wd); }

/// `[object + base + index*scale + disp]`. Object ids index Program::data_objects.
struct Mem {
  Width width = Width::none;
  std::optional<std::uint32_t> object;
  std::optional<std::uint8_t> base;
  std::optional<std::uint8_t> index;
  std::uint8_t scale = 1;
  std::int64_t disp = 0;
  bool operator==(const Mem&) const = default;
};

struct Imm {
  std::uint64_t value = 0;
  bool operator==(const Imm&) const = default;
};

struct Target {
  std::uint32_t addr = 0;
  bool operator==(const Target&) const = default;
};

using Operand = std::variant<std::monostate, Reg, Mem, Imm, Target>;

struct Instruction {
  Opcode opcode = Opcode::halt;
  Cond cond = Cond::z;  // meaningful for jcc only
  Operand dst;
  Operand src;
  std::uint32_t addr = 0;
  bool operator==(const Instruction&) const = default;
};

struct DataObject {
  std::string name;
  Bytes bytes;
  bool is_mutable = true;
  bool operator==(const DataObject&) const = default;
};

struct Program {
  std::vector<Instruction> instructions;
  std::vector<DataObject> data_objects;
  std::uint32_t entry = 0;
  std::optional<std::string> label;
  std::map<std::string, std::string> metadata;

  bool operator==(const Program&) const = default;

  std::optional<std::uint32_t> find_object(std::string_view name) const {
    for (std::size_t i = 0; i < data_objects.size(); ++i) {
      if (data_objects[i].name == name) return static_cast<std::uint32_t>(i);
    }
    return std::nullopt;
  }

  /// Reassigns addr fields to match positions.
  void renumber() {
    for (std::size_t i = 0; i < instructions.size(); ++i) instructions[i].addr = static_cast<std::uint32_t>(i);
  }
};

// Operand helpers, mostly for tests and program builders.

inline const Reg* as_reg(const Operand& op) { return std::get_if<Reg>(&op); }
inline const Mem* as_mem(const Operand& op) { return std::get_if<Mem>(&op); }
inline const Target* as_target(const Operand& op) { return std::get_if<Target>(&op); }

/// The memory operand of an instruction, if any (at most one per instruction).
inline Mem* mem_operand(Instruction& inst) {
  if (auto* m = std::get_if<Mem>(&inst.dst)) return m;
  return std::get_if<Mem>(&inst.src);
}

inline const Mem* mem_operand(const Instruction& inst) {
  if (auto* m = as_mem(inst.dst)) return m;
  return as_mem(inst.src);
}

inline Instruction make(Opcode op, Operand dst = {}, Operand src = {}) {
  Instruction inst;
  inst.opcode = op;
  inst.dst = dst;
  inst.src = src;
  return inst;
}

inline Instruction make_jcc(Cond cond, std::uint32_t target) {
  Instruction inst;
  inst.opcode = Opcode::jcc;
  inst.cond = cond;
  inst.dst = Target{target};
  return inst;
}

}  // namespace cryptoknight::isa
