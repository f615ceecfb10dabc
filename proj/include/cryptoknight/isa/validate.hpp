#pragma once

#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/isa/program.hpp"

namespace cryptoknight::isa {

namespace detail {

enum Kind : unsigned {
  kNone = 1u << 0,
  kScalar = 1u << 1,
  kWide = 1u << 2,
  kMemObj = 1u << 3,  // memory operand naming a data object
  kAddr = 1u << 4,    // bare address expression
  kImm = 1u << 5,
  kTarget = 1u << 6,
};

struct Form {
  unsigned dst;
  unsigned src;
  unsigned widths;  // bitmask over access sizes in bytes; 0 = any/not applicable
};

inline constexpr unsigned kScalarWidths = (1u << 1) | (1u << 2) | (1u << 4) | (1u << 8);
inline constexpr unsigned kWideWidth = 1u << 16;

inline std::vector<Form> forms_of(Opcode op) {
  switch (op) {
    case Opcode::add:
    case Opcode::sub:
    case Opcode::shr:
    case Opcode::shl:
    case Opcode::and_:
    case Opcode::or_:
    case Opcode::xor_:
    case Opcode::test:
      return {{kScalar, kScalar | kImm, 0}};
    case Opcode::inc:
    case Opcode::dec:
      return {{kScalar, kNone, 0}};
    case Opcode::pxor:
      return {{kWide, kWide, 0}};
    case Opcode::lea:
      return {{kScalar, kAddr, 0}};
    case Opcode::mov:
      return {{kScalar, kScalar | kImm, 0}, {kWide, kWide, 0}};
    case Opcode::load:
      return {{kScalar, kMemObj, kScalarWidths}, {kWide, kMemObj, kWideWidth}};
    case Opcode::store:
      return {{kMemObj, kScalar | kImm, kScalarWidths}, {kMemObj, kWide, kWideWidth}};
    case Opcode::jmp:
    case Opcode::jcc:
    case Opcode::call:
      return {{kTarget, kNone, 0}};
    case Opcode::ret:
    case Opcode::halt:
      return {{kNone, kNone, 0}};
  }
  return {};
}

inline unsigned kind_of(const Operand& op) {
  return std::visit(
      [](const auto& v) -> unsigned {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) return kNone;
        else if constexpr (std::is_same_v<T, Reg>) return v.cls == RegClass::scalar ? kScalar : kWide;
        else if constexpr (std::is_same_v<T, Mem>) return v.object ? kMemObj : kAddr;
        else if constexpr (std::is_same_v<T, Imm>) return kImm;
        else return kTarget;
      },
      op);
}

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  }
  return true;
}

inline bool looks_like_register(std::string_view s) {
  if (s.size() < 2 || (s[0] != 'r' && s[0] != 'w')) return false;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

}  // namespace detail

/// Checks operand shapes and ranges of one instruction; appends messages without a location prefix.
/// Targets are checked against `code_size` when given, else against p.instructions.
inline void check_instruction(const Instruction& inst, const Program& p, std::vector<std::string>& out,
                              std::optional<std::size_t> code_size = std::nullopt) {
  using namespace detail;
  const auto forms = forms_of(inst.opcode);
  const unsigned dk = kind_of(inst.dst);
  const unsigned sk = kind_of(inst.src);
  const Form* match = nullptr;
  for (const auto& f : forms) {
    if ((f.dst & dk) && (f.src & sk)) {
      match = &f;
      break;
    }
  }
  if (!match) {
    out.push_back("operand arity mismatch for " + std::string(name_of(inst.opcode)));
    return;
  }
  auto check_reg = [&](const Reg& reg) {
    const unsigned limit = reg.cls == RegClass::scalar ? kScalarRegisters : kWideRegisters;
    if (reg.index >= limit) out.push_back("register index out of range");
  };
  auto check_mem = [&](const Mem& m) {
    if (m.object && *m.object >= p.data_objects.size()) out.push_back("data object id out of range");
    if (m.base && *m.base >= kScalarRegisters) out.push_back("base register out of range");
    if (m.index && *m.index >= kScalarRegisters) out.push_back("index register out of range");
    if (m.scale != 1 && m.scale != 2 && m.scale != 4 && m.scale != 8) out.push_back("invalid scale");
    if (!m.index && m.scale != 1) out.push_back("scale without index register");
    if (m.object) {
      if (m.width == Width::none || !(match->widths & (1u << bytes_of(m.width)))) {
        out.push_back("invalid access width");
      }
    } else if (m.width != Width::none) {
      out.push_back("address expression cannot carry a width");
    }
  };
  for (const Operand* op : {&inst.dst, &inst.src}) {
    if (auto* reg = std::get_if<Reg>(op)) check_reg(*reg);
    if (auto* m = std::get_if<Mem>(op)) check_mem(*m);
    if (auto* t = std::get_if<Target>(op)) {
      if (t->addr >= code_size.value_or(p.instructions.size())) out.push_back("target out of range");
    }
  }
}

/// Every invariant violation of `p`, each prefixed by its location. Empty means valid.
inline std::vector<std::string> validate(const Program& p) {
  std::vector<std::string> diags;
  if (p.instructions.empty()) {
    diags.emplace_back("empty instruction list");
  } else if (p.entry >= p.instructions.size()) {
    diags.emplace_back("entry out of range");
  }

  std::set<std::string> names;
  for (const auto& obj : p.data_objects) {
    if (!detail::is_identifier(obj.name) || detail::looks_like_register(obj.name)) {
      diags.push_back("data object '" + obj.name + "': invalid name");
    }
    if (!names.insert(obj.name).second) diags.push_back("data object '" + obj.name + "': duplicate name");
    if (obj.bytes.empty()) diags.push_back("data object '" + obj.name + "': empty");
  }

  bool shapes_ok = true;
  for (std::size_t i = 0; i < p.instructions.size(); ++i) {
    const auto& inst = p.instructions[i];
    std::vector<std::string> local;
    if (inst.addr != i) local.emplace_back("addr field does not match position");
    check_instruction(inst, p, local);
    for (auto& msg : local) diags.push_back("instruction " + std::to_string(i) + ": " + msg);
    if (!local.empty()) shapes_ok = false;
  }
  if (!shapes_ok || p.instructions.empty() || p.entry >= p.instructions.size()) return diags;

  // Reachability from the entry point.
  const std::size_t n = p.instructions.size();
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> work{p.entry};
  bool halts = false;
  bool falls_off = false;
  while (!work.empty()) {
    const std::size_t i = work.back();
    work.pop_back();
    if (seen[i]) continue;
    seen[i] = true;
    const auto& inst = p.instructions[i];
    auto next = [&] {
      if (i + 1 < n) work.push_back(i + 1);
      else falls_off = true;
    };
    switch (inst.opcode) {
      case Opcode::halt:
        halts = true;
        break;
      case Opcode::ret:
        break;
      case Opcode::jmp:
        work.push_back(std::get<Target>(inst.dst).addr);
        break;
      case Opcode::jcc:
      case Opcode::call:
        work.push_back(std::get<Target>(inst.dst).addr);
        next();
        break;
      default:
        next();
    }
  }
  if (!halts) diags.emplace_back("no reachable halt");
  if (falls_off) diags.emplace_back("execution can run past the last instruction");
  return diags;
}

inline void require_valid(const Program& p) {
  const auto diags = validate(p);
  if (diags.empty()) return;
  std::string msg = "invalid program:";
  for (const auto& d : diags) msg += "\n  " + d;
  throw ValidationError(msg);
}

}  // namespace cryptoknight::isa
