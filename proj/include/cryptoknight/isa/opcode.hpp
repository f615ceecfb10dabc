#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace cryptoknight::isa {

/// The first twelve opcodes are the weighted mnemonics, in feature-row order.
enum class Opcode : std::uint8_t {
  add,
  sub,
  inc,
  dec,
  shr,
  shl,
  and_,
  or_,
  xor_,
  pxor,
  test,
  lea,
  mov,
  load,
  store,
  jmp,
  jcc,
  call,
  ret,
  halt,
};

inline constexpr std::size_t kOpcodeCount = 20;
inline constexpr std::size_t kWeightedCount = 12;

inline constexpr std::array<std::string_view, kOpcodeCount> kOpcodeNames = {
    "add", "sub", "inc", "dec", "shr", "shl", "and", "or",  "xor",  "pxor",
    "test", "lea", "mov", "load", "store", "jmp", "jcc", "call", "ret", "halt",
};

/// Branch conditions. Only jcc reads flags.
enum class Cond : std::uint8_t { z, nz, c, nc, a, be };

inline constexpr std::array<std::string_view, 6> kCondMnemonics = {"jz", "jnz", "jc", "jnc", "ja", "jbe"};

constexpr std::string_view name_of(Opcode op) { return kOpcodeNames[static_cast<std::size_t>(op)]; }

constexpr std::size_t index_of(Opcode op) { return static_cast<std::size_t>(op); }

constexpr bool is_weighted(Opcode op) { return index_of(op) < kWeightedCount; }

/// Branch, call or return: the instructions that end a basic block.
constexpr bool is_tail(Opcode op) {
  return op == Opcode::jmp || op == Opcode::jcc || op == Opcode::call || op == Opcode::ret;
}

constexpr bool sets_flags(Opcode op) {
  switch (op) {
    case Opcode::add:
    case Opcode::sub:
    case Opcode::inc:
    case Opcode::dec:
    case Opcode::shr:
    case Opcode::shl:
    case Opcode::and_:
    case Opcode::or_:
    case Opcode::xor_:
    case Opcode::test:
      return true;
    default:
      return false;
  }
}

constexpr Cond invert(Cond c) {
  switch (c) {
    case Cond::z: return Cond::nz;
    case Cond::nz: return Cond::z;
    case Cond::c: return Cond::nc;
    case Cond::nc: return Cond::c;
    case Cond::a: return Cond::be;
    case Cond::be: return Cond::a;
  }
  return Cond::z;
}

constexpr std::string_view jcc_mnemonic(Cond c) { return kCondMnemonics[static_cast<std::size_t>(c)]; }

inline std::optional<Opcode> opcode_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpcodeCount; ++i) {
    if (kOpcodeNames[i] == name && name != "jcc") return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

inline std::optional<Cond> cond_from_mnemonic(std::string_view name) {
  for (std::size_t i = 0; i < kCondMnemonics.size(); ++i) {
    if (kCondMnemonics[i] == name) return static_cast<Cond>(i);
  }
  return std::nullopt;
}

}  // namespace cryptoknight::isa
