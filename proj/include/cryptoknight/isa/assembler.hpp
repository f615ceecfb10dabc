#pragma once

// Line-oriented assembly text <-> Program.
//
//   .label <class-tag>            optional ground-truth tag
//   .meta <key> <value...>        free-form metadata
//   .entry <label>                defaults to the first instruction
//   .data <name> <hex...>         mutable object with initial bytes
//   .rodata <name> <hex...>       immutable object
//   .zero <name> <length>         mutable zero-filled object
//   name:                         code label
//   mnemonic dst, src             ; comment
//
// Memory operands are `width [object + base + index*scale + disp]` with width
// one of byte/word/dword/qword/oword; lea takes a bare `[base + index*scale + disp]`.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/isa/program.hpp"
#include "cryptoknight/isa/validate.hpp"

namespace cryptoknight::isa {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline std::optional<std::uint64_t> parse_number(std::string_view s) {
  bool negative = false;
  if (!s.empty() && s[0] == '-') {
    negative = true;
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return negative ? ~v + 1 : v;
}

inline std::optional<Reg> parse_register(std::string_view s) {
  if (!looks_like_register(s)) return std::nullopt;
  unsigned idx = 0;
  auto [ptr, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), idx);
  if (ec != std::errc{} || idx > 255) return std::nullopt;
  return Reg{s[0] == 'r' ? RegClass::scalar : RegClass::wide, static_cast<std::uint8_t>(idx)};
}

inline std::optional<Width> parse_width(std::string_view s) {
  if (s == "byte") return Width::byte;
  if (s == "word") return Width::word;
  if (s == "dword") return Width::dword;
  if (s == "qword") return Width::qword;
  if (s == "oword") return Width::oword;
  return std::nullopt;
}

inline std::string_view width_name(Width wd) {
  switch (wd) {
    case Width::byte: return "byte";
    case Width::word: return "word";
    case Width::dword: return "dword";
    case Width::qword: return "qword";
    case Width::oword: return "oword";
    case Width::none: break;
  }
  return "";
}

inline std::string hex_u64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

class Parser {
 public:
  explicit Parser(std::string_view text) {
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t end = text.find('\n', start);
      const std::size_t stop = end == std::string_view::npos ? text.size() : end;
      std::string_view line = text.substr(start, stop - start);
      if (const auto semi = line.find(';'); semi != std::string_view::npos) line = line.substr(0, semi);
      lines_.push_back(trim(line));
      if (end == std::string_view::npos) break;
      start = end + 1;
    }
  }

  Program run() {
    collect();
    Program p;
    p.data_objects = objects_;
    p.label = label_;
    p.metadata = metadata_;
    for (const auto& [line_no, text] : code_) p.instructions.push_back(parse_instruction(line_no, text, p));
    p.renumber();
    if (entry_label_) {
      auto it = labels_.find(*entry_label_);
      if (it == labels_.end()) throw ParseError(entry_line_, "unresolved label '" + *entry_label_ + "'");
      p.entry = it->second;
    }
    return p;
  }

 private:
  void collect() {
    std::set<std::string> object_names;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      const std::size_t line_no = i + 1;
      std::string_view line = lines_[i];
      if (line.empty()) continue;
      if (line[0] == '.') {
        directive(line_no, line, object_names);
        continue;
      }
      // Leading labels, possibly several, possibly followed by an instruction.
      while (true) {
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) break;
        const auto name = trim(line.substr(0, colon));
        if (!is_identifier(name) || name.find_first_of(" \t[,") != std::string_view::npos) break;
        if (labels_.count(std::string(name))) throw ParseError(line_no, "duplicate label '" + std::string(name) + "'");
        labels_[std::string(name)] = static_cast<std::uint32_t>(code_.size());
        line = trim(line.substr(colon + 1));
      }
      if (!line.empty()) code_.emplace_back(line_no, line);
    }
  }

  void directive(std::size_t line_no, std::string_view line, std::set<std::string>& names) {
    const auto tokens = split_ws(line);
    const auto kw = tokens[0];
    auto need = [&](std::size_t n) {
      if (tokens.size() < n) throw ParseError(line_no, "missing operand for " + std::string(kw));
    };
    if (kw == ".data" || kw == ".rodata" || kw == ".zero") {
      need(3);
      DataObject obj;
      obj.name = std::string(tokens[1]);
      if (!is_identifier(obj.name) || looks_like_register(obj.name)) {
        throw ParseError(line_no, "invalid data object name '" + obj.name + "'");
      }
      if (!names.insert(obj.name).second) throw ParseError(line_no, "duplicate data object '" + obj.name + "'");
      if (kw == ".zero") {
        if (tokens.size() != 3) throw ParseError(line_no, "syntax error in .zero");
        const auto len = parse_number(tokens[2]);
        if (!len || *len == 0 || *len > (1u << 24)) throw ParseError(line_no, "invalid length");
        obj.bytes.assign(*len, 0);
      } else {
        std::string hex;
        for (std::size_t t = 2; t < tokens.size(); ++t) hex += tokens[t];
        auto bytes = from_hex(hex);
        if (!bytes || bytes->empty()) throw ParseError(line_no, "invalid hex bytes");
        obj.bytes = std::move(*bytes);
        obj.is_mutable = kw == ".data";
      }
      objects_.push_back(std::move(obj));
    } else if (kw == ".entry") {
      need(2);
      entry_label_ = std::string(tokens[1]);
      entry_line_ = line_no;
    } else if (kw == ".label") {
      need(2);
      label_ = std::string(tokens[1]);
    } else if (kw == ".meta") {
      need(3);
      const auto key_pos = line.find(tokens[1], kw.size());
      const auto rest = trim(line.substr(key_pos + tokens[1].size()));
      metadata_[std::string(tokens[1])] = std::string(rest);
    } else {
      throw ParseError(line_no, "unknown directive " + std::string(kw));
    }
  }

  std::optional<std::uint32_t> object_id(std::string_view name) const {
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      if (objects_[i].name == name) return static_cast<std::uint32_t>(i);
    }
    return std::nullopt;
  }

  Instruction parse_instruction(std::size_t line_no, std::string_view text, const Program& p) {
    const auto space = text.find_first_of(" \t");
    const std::string mnemonic = lower(text.substr(0, space));
    const std::string_view rest = space == std::string_view::npos ? std::string_view{} : trim(text.substr(space));

    Instruction inst;
    if (auto op = opcode_from_name(mnemonic)) {
      inst.opcode = *op;
    } else if (auto cond = cond_from_mnemonic(mnemonic)) {
      inst.opcode = Opcode::jcc;
      inst.cond = *cond;
    } else {
      throw ParseError(line_no, "unknown mnemonic '" + mnemonic + "'");
    }

    std::vector<std::string_view> operands;
    if (!rest.empty()) {
      int depth = 0;
      std::size_t start = 0;
      for (std::size_t i = 0; i <= rest.size(); ++i) {
        if (i == rest.size() || (rest[i] == ',' && depth == 0)) {
          operands.push_back(trim(rest.substr(start, i - start)));
          start = i + 1;
        } else if (rest[i] == '[') {
          ++depth;
        } else if (rest[i] == ']') {
          --depth;
        }
      }
    }
    if (operands.size() > 2) throw ParseError(line_no, "operand arity mismatch for " + mnemonic);
    const bool branch = inst.opcode == Opcode::jmp || inst.opcode == Opcode::jcc || inst.opcode == Opcode::call;
    if (!operands.empty()) inst.dst = parse_operand(line_no, operands[0], branch);
    if (operands.size() > 1) inst.src = parse_operand(line_no, operands[1], false);

    std::vector<std::string> problems;
    check_instruction(inst, p, problems, code_.size());
    if (!problems.empty()) throw ParseError(line_no, problems.front());
    return inst;
  }

  Operand parse_operand(std::size_t line_no, std::string_view s, bool branch_target) {
    if (s.empty()) throw ParseError(line_no, "empty operand");
    if (branch_target) {
      if (!is_identifier(s)) throw ParseError(line_no, "expected label, got '" + std::string(s) + "'");
      auto it = labels_.find(std::string(s));
      if (it == labels_.end()) throw ParseError(line_no, "unresolved label '" + std::string(s) + "'");
      return Target{it->second};
    }
    const auto bracket = s.find('[');
    if (bracket != std::string_view::npos) {
      Mem m;
      const auto prefix = trim(s.substr(0, bracket));
      if (!prefix.empty()) {
        auto wd = parse_width(lower(prefix));
        if (!wd) throw ParseError(line_no, "unknown width '" + std::string(prefix) + "'");
        m.width = *wd;
      }
      if (s.back() != ']') throw ParseError(line_no, "unterminated memory operand");
      parse_address(line_no, s.substr(bracket + 1, s.size() - bracket - 2), m);
      if (m.width != Width::none && !m.object) throw ParseError(line_no, "memory operand needs a data object");
      return m;
    }
    const std::string low = lower(s);
    if (auto reg = parse_register(low)) return *reg;
    if (auto num = parse_number(low)) return Imm{*num};
    throw ParseError(line_no, "cannot parse operand '" + std::string(s) + "'");
  }

  void parse_address(std::size_t line_no, std::string_view expr, Mem& m) {
    expr = trim(expr);
    if (expr.empty()) throw ParseError(line_no, "empty address");
    std::size_t i = 0;
    bool first = true;
    while (i < expr.size()) {
      bool negative = false;
      if (!first || expr[i] == '-' || expr[i] == '+') {
        if (expr[i] != '+' && expr[i] != '-') throw ParseError(line_no, "expected + or - in address");
        negative = expr[i] == '-';
        ++i;
      }
      std::size_t j = i;
      while (j < expr.size() && expr[j] != '+' && expr[j] != '-') ++j;
      const auto term = trim(expr.substr(i, j - i));
      i = j;
      if (term.empty()) throw ParseError(line_no, "empty address term");
      const std::string low = lower(term);
      if (const auto star = low.find('*'); star != std::string::npos) {
        auto lhs = trim(std::string_view(low).substr(0, star));
        auto rhs = trim(std::string_view(low).substr(star + 1));
        auto reg = parse_register(lhs);
        auto scale = parse_number(rhs);
        if (!reg) {
          reg = parse_register(rhs);
          scale = parse_number(lhs);
        }
        if (!reg || !scale || reg->cls != RegClass::scalar || negative || m.index) {
          throw ParseError(line_no, "invalid scaled index '" + std::string(term) + "'");
        }
        m.index = reg->index;
        m.scale = static_cast<std::uint8_t>(*scale > 255 ? 0 : *scale);
      } else if (auto reg = parse_register(low)) {
        if (reg->cls != RegClass::scalar || negative) throw ParseError(line_no, "invalid address register");
        if (!m.base) m.base = reg->index;
        else if (!m.index) m.index = reg->index;
        else throw ParseError(line_no, "too many address registers");
      } else if (auto num = parse_number(low)) {
        m.disp += static_cast<std::int64_t>(negative ? ~*num + 1 : *num);
      } else if (is_identifier(term)) {
        if (!first || negative || m.object) throw ParseError(line_no, "data object must lead the address");
        auto id = object_id(term);
        if (!id) throw ParseError(line_no, "unknown data object '" + std::string(term) + "'");
        m.object = *id;
      } else {
        throw ParseError(line_no, "cannot parse address term '" + std::string(term) + "'");
      }
      first = false;
    }
  }

  std::vector<std::string_view> lines_;
  std::vector<std::pair<std::size_t, std::string_view>> code_;
  std::map<std::string, std::uint32_t> labels_;
  std::vector<DataObject> objects_;
  std::optional<std::string> label_;
  std::map<std::string, std::string> metadata_;
  std::optional<std::string> entry_label_;
  std::size_t entry_line_ = 0;
};

}  // namespace detail

inline Program parse_program(std::string_view text) { return detail::Parser(text).run(); }

inline std::string format_operand(const Operand& op, const Program& p) {
  return std::visit(
      [&](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return "";
        } else if constexpr (std::is_same_v<T, Reg>) {
          return (v.cls == RegClass::scalar ? "r" : "w") + std::to_string(v.index);
        } else if constexpr (std::is_same_v<T, Imm>) {
          return detail::hex_u64(v.value);
        } else if constexpr (std::is_same_v<T, Target>) {
          return "L" + std::to_string(v.addr);
        } else {
          std::string body;
          auto add_term = [&](const std::string& term, bool negative) {
            if (body.empty()) body = negative ? "-" + term : term;
            else body += (negative ? " - " : " + ") + term;
          };
          if (v.object) add_term(p.data_objects.at(*v.object).name, false);
          if (v.base) add_term("r" + std::to_string(*v.base), false);
          if (v.index) {
            add_term("r" + std::to_string(*v.index) + (v.scale != 1 ? "*" + std::to_string(v.scale) : ""), false);
          }
          if (v.disp != 0 || body.empty()) {
            const bool negative = v.disp < 0;
            const std::uint64_t mag = negative ? ~static_cast<std::uint64_t>(v.disp) + 1 : static_cast<std::uint64_t>(v.disp);
            add_term(detail::hex_u64(mag), negative);
          }
          std::string out = "[" + body + "]";
          if (v.width != Width::none) out = std::string(detail::width_name(v.width)) + " " + out;
          return out;
        }
      },
      op);
}

inline std::string format_instruction(const Instruction& inst, const Program& p) {
  std::string out(inst.opcode == Opcode::jcc ? jcc_mnemonic(inst.cond) : name_of(inst.opcode));
  if (!std::holds_alternative<std::monostate>(inst.dst)) out += " " + format_operand(inst.dst, p);
  if (!std::holds_alternative<std::monostate>(inst.src)) out += ", " + format_operand(inst.src, p);
  return out;
}

/// Canonical text for a valid program. Throws ValidationError otherwise.
inline std::string disassemble(const Program& p) {
  require_valid(p);
  std::ostringstream out;
  if (p.label) out << ".label " << *p.label << '\n';
  for (const auto& [k, v] : p.metadata) out << ".meta " << k << ' ' << v << '\n';
  if (p.entry != 0) out << ".entry L" << p.entry << '\n';
  for (const auto& obj : p.data_objects) {
    const bool all_zero = std::all_of(obj.bytes.begin(), obj.bytes.end(), [](auto b) { return b == 0; });
    if (obj.is_mutable && all_zero) out << ".zero " << obj.name << ' ' << obj.bytes.size() << '\n';
    else out << (obj.is_mutable ? ".data " : ".rodata ") << obj.name << ' ' << to_hex(obj.bytes) << '\n';
  }
  std::vector<bool> labelled(p.instructions.size(), false);
  if (p.entry != 0) labelled[p.entry] = true;
  for (const auto& inst : p.instructions) {
    if (auto* t = as_target(inst.dst)) labelled[t->addr] = true;
  }
  for (std::size_t i = 0; i < p.instructions.size(); ++i) {
    if (labelled[i]) out << 'L' << i << ":\n";
    out << format_instruction(p.instructions[i], p) << '\n';
  }
  return out.str();
}

}  // namespace cryptoknight::isa
