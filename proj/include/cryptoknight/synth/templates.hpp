#pragma once

// Assembly templates for each primitive. Every template leaves its result in
// a mutable output object and uses only the documented ISA. Counted loops use
// the `mov rc, N` / body / `dec rc` / `jnz` idiom that the unroller recognises.

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/isa/assembler.hpp"
#include "cryptoknight/synth/constants.hpp"

namespace cryptoknight::synth {

/// A piece of a program: data directives, straight-line main code (no halt),
/// and subroutines placed after the final halt.
struct Fragment {
  std::string data;
  std::string code;
  std::string subroutines;
};

namespace detail {

inline std::string hex_imm(std::uint64_t v) { return isa::detail::hex_u64(v); }

/// Replaces `$` with `prefix` and `{KEY}` with the mapped value.
inline std::string expand(std::string_view text, std::string_view prefix,
                          std::initializer_list<std::pair<std::string_view, std::string>> vars = {}) {
  std::string out;
  out.reserve(text.size() + 64);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '$') {
      out += prefix;
    } else if (c == '{') {
      const auto close = text.find('}', i);
      const auto key = text.substr(i + 1, close - i - 1);
      bool found = false;
      for (const auto& [k, v] : vars) {
        if (k == key) {
          out += v;
          found = true;
          break;
        }
      }
      if (!found) throw Error("template variable {" + std::string(key) + "} not bound");
      i = close;
    } else {
      out += c;
    }
  }
  return out;
}

inline std::string rodata(std::string_view name, std::span<const std::uint8_t> bytes) {
  return ".rodata " + std::string(name) + " " + to_hex(bytes) + "\n";
}

inline std::string data(std::string_view name, std::span<const std::uint8_t> bytes) {
  return ".data " + std::string(name) + " " + to_hex(bytes) + "\n";
}

inline std::string zero(std::string_view name, std::size_t len) {
  return ".zero " + std::string(name) + " " + std::to_string(len) + "\n";
}

template <typename T, std::size_t N>
Bytes le_words(const std::array<T, N>& words) {
  Bytes out(N * sizeof(T));
  for (std::size_t i = 0; i < N; ++i) store_le(std::span(out).subspan(i * sizeof(T), sizeof(T)), words[i]);
  return out;
}

inline Bytes le64(std::uint64_t v) {
  Bytes out(8);
  store_le(out, v);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------- RC4

inline Fragment rc4_fragment(std::span<const std::uint8_t> key, std::span<const std::uint8_t> plaintext,
                             std::string_view prefix, std::string_view out) {
  using namespace detail;
  Fragment f;
  f.data = rodata(std::string(prefix) + "key", key) + rodata(std::string(prefix) + "pt", plaintext) +
           zero(std::string(prefix) + "S", 256) + zero(out, plaintext.size());
  f.code = expand(R"(
    xor r0, r0
    mov r5, 0x100
$init:
    store byte [$S + r0], r0
    inc r0
    dec r5
    jnz $init
    xor r0, r0
    xor r1, r1
    xor r2, r2
    mov r5, 0x100
$ksa:
    load r3, byte [$S + r0]
    load r4, byte [$key + r2]
    add r1, r3
    add r1, r4
    and r1, 0xff
    load r6, byte [$S + r1]
    store byte [$S + r0], r6
    store byte [$S + r1], r3
    inc r0
    lea r2, [r2 + 0x1]
    mov r7, r2
    sub r7, {KL}
    mov r8, r7
    shr r8, 0x3f
    xor r9, r9
    sub r9, r8
    and r9, {KL}
    add r7, r9
    mov r2, r7
    dec r5
    jnz $ksa
    xor r0, r0
    xor r1, r1
    xor r2, r2
    mov r5, {PL}
$prga:
    inc r0
    and r0, 0xff
    load r3, byte [$S + r0]
    add r1, r3
    and r1, 0xff
    load r4, byte [$S + r1]
    store byte [$S + r0], r4
    store byte [$S + r1], r3
    add r3, r4
    and r3, 0xff
    load r6, byte [$S + r3]
    load r7, byte [$pt + r2]
    xor r7, r6
    store byte [{OUT} + r2], r7
    inc r2
    dec r5
    jnz $prga
)",
                  prefix, {{"KL", hex_imm(key.size())}, {"PL", hex_imm(plaintext.size())}, {"OUT", std::string(out)}});
  return f;
}

// ---------------------------------------------------------------- AES-128 (CBC)

inline Fragment aes_fragment(std::span<const std::uint8_t> key, std::span<const std::uint8_t> iv,
                             std::span<const std::uint8_t> plaintext, std::string_view prefix,
                             std::string_view out) {
  using namespace detail;
  const std::string p(prefix);
  Bytes shift(16);
  for (unsigned row = 0; row < 4; ++row) {
    for (unsigned col = 0; col < 4; ++col) shift[row + 4 * col] = static_cast<std::uint8_t>(row + 4 * ((col + row) % 4));
  }
  Fragment f;
  f.data = rodata(p + "sbox", constants::kAesSbox) + rodata(p + "rcon", constants::kAesRcon) +
           rodata(p + "shift", shift) + rodata(p + "key", key) + rodata(p + "iv", iv) + rodata(p + "pt", plaintext) +
           zero(p + "rk", 176) + zero(p + "state", 16) + zero(p + "tmp", 16) + zero(out, plaintext.size());

  // xtime on the byte in `reg`, using r8/r9 as scratch.
  auto xtime = [](std::string_view reg) {
    const std::string x(reg);
    return "    mov r8, " + x + "\n    shr r8, 0x7\n    xor r9, r9\n    sub r9, r8\n    and r9, 0x1b\n    shl " + x +
           ", 0x1\n    xor " + x + ", r9\n    and " + x + ", 0xff\n";
  };
  // out byte = a_i ^ t ^ xtime(a_i ^ a_j)
  auto mix_byte = [&](std::string_view ai, std::string_view aj, unsigned offset) {
    const std::string a(ai), b(aj);
    std::string s = "    mov r7, " + a + "\n    xor r7, " + b + "\n";
    s += xtime("r7");
    s += "    xor r7, r6\n    xor r7, " + a + "\n";
    s += "    store byte [$tmp + r0" + (offset ? " + " + hex_imm(offset) : std::string()) + "], r7\n";
    return s;
  };

  f.code = expand(R"(
    load w0, oword [$key]
    store oword [$rk], w0
    mov r0, 0x10
    xor r10, r10
    mov r5, 0xa
$kexp:
    load r1, byte [$rk + r0 - 0x3]
    load r2, byte [$rk + r0 - 0x2]
    load r3, byte [$rk + r0 - 0x1]
    load r4, byte [$rk + r0 - 0x4]
    load r1, byte [$sbox + r1]
    load r2, byte [$sbox + r2]
    load r3, byte [$sbox + r3]
    load r4, byte [$sbox + r4]
    load r6, byte [$rcon + r10]
    xor r1, r6
    shl r2, 0x8
    shl r3, 0x10
    shl r4, 0x18
    or r1, r2
    or r1, r3
    or r1, r4
    load r6, dword [$rk + r0 - 0x10]
    xor r6, r1
    store dword [$rk + r0], r6
    load r7, dword [$rk + r0 - 0xc]
    xor r7, r6
    store dword [$rk + r0 + 0x4], r7
    load r6, dword [$rk + r0 - 0x8]
    xor r6, r7
    store dword [$rk + r0 + 0x8], r6
    load r7, dword [$rk + r0 - 0x4]
    xor r7, r6
    store dword [$rk + r0 + 0xc], r7
    add r0, 0x10
    inc r10
    dec r5
    jnz $kexp
    xor r10, r10
    load w3, oword [$iv]
    mov r11, {NB}
$block:
    load w0, oword [$pt + r10]
    pxor w0, w3
    load w1, oword [$rk]
    pxor w0, w1
    store oword [$state], w0
    mov r12, 0x10
    mov r13, 0x9
$round:
    call $subshift
    call $mixcols
    load w0, oword [$state]
    load w1, oword [$rk + r12]
    pxor w0, w1
    store oword [$state], w0
    add r12, 0x10
    dec r13
    jnz $round
    call $subshift
    load w0, oword [$state]
    load w1, oword [$rk + r12]
    pxor w0, w1
    store oword [{OUT} + r10], w0
    mov w3, w0
    add r10, 0x10
    dec r11
    jnz $block
)",
                  prefix, {{"NB", hex_imm(plaintext.size() / 16)}, {"OUT", std::string(out)}});

  std::string mix_body;
  mix_body += mix_byte("r1", "r2", 0);
  mix_body += mix_byte("r2", "r3", 1);
  mix_body += mix_byte("r3", "r4", 2);
  mix_body += mix_byte("r4", "r1", 3);
  f.subroutines = expand(R"(
$subshift:
    xor r0, r0
    mov r5, 0x10
$ss_loop:
    load r1, byte [$shift + r0]
    load r2, byte [$state + r1]
    load r2, byte [$sbox + r2]
    store byte [$tmp + r0], r2
    inc r0
    dec r5
    jnz $ss_loop
    load w0, oword [$tmp]
    store oword [$state], w0
    ret
$mixcols:
    xor r0, r0
    mov r5, 0x4
$mc_loop:
    load r1, byte [$state + r0]
    load r2, byte [$state + r0 + 0x1]
    load r3, byte [$state + r0 + 0x2]
    load r4, byte [$state + r0 + 0x3]
    mov r6, r1
    xor r6, r2
    xor r6, r3
    xor r6, r4
)" + mix_body + R"(    add r0, 0x4
    dec r5
    jnz $mc_loop
    load w0, oword [$tmp]
    store oword [$state], w0
    ret
)",
                         prefix);
  return f;
}

// ---------------------------------------------------------------- Blowfish (CBC)

namespace detail {

/// One full Blowfish encryption of (r0 = L, r1 = R), 32-bit halves.
/// Clobbers r2, r3, r5..r10. `tag` makes the labels unique.
inline std::string blowfish_encrypt_body(std::string_view tag) {
  return R"(
    xor r2, r2
    mov r5, 0x10
$round_)" + std::string(tag) + R"(:
    load r3, dword [$P + r2]
    xor r0, r3
    mov r6, r0
    shr r6, 0x18
    mov r7, r0
    shr r7, 0x10
    and r7, 0xff
    mov r8, r0
    shr r8, 0x8
    and r8, 0xff
    mov r9, r0
    and r9, 0xff
    load r6, dword [$S0 + r6*4]
    load r7, dword [$S1 + r7*4]
    load r8, dword [$S2 + r8*4]
    load r9, dword [$S3 + r9*4]
    add r6, r7
    and r6, 0xffffffff
    xor r6, r8
    add r6, r9
    and r6, 0xffffffff
    xor r1, r6
    mov r10, r0
    mov r0, r1
    mov r1, r10
    lea r2, [r2 + 0x4]
    dec r5
    jnz $round_)" + std::string(tag) + R"(
    mov r10, r0
    mov r0, r1
    mov r1, r10
    load r3, dword [$P + 0x40]
    xor r1, r3
    load r3, dword [$P + 0x44]
    xor r0, r3
)";
}

/// Big-endian 32-bit load of `obj[r11 + disp]` into `dst`, using r4 as scratch.
inline std::string load_be32(std::string_view obj, std::string_view dst, unsigned disp) {
  const std::string o(obj), d(dst);
  auto at = [&](unsigned k) {
    const unsigned off = disp + k;
    return "[" + o + " + r11" + (off ? " + " + hex_imm(off) : std::string()) + "]";
  };
  return "    load " + d + ", byte " + at(0) + "\n    shl " + d + ", 0x18\n" +
         "    load r4, byte " + at(1) + "\n    shl r4, 0x10\n    or " + d + ", r4\n" +
         "    load r4, byte " + at(2) + "\n    shl r4, 0x8\n    or " + d + ", r4\n" +
         "    load r4, byte " + at(3) + "\n    or " + d + ", r4\n";
}

inline std::string store_be32(std::string_view obj, std::string_view src, unsigned disp) {
  const std::string o(obj), s(src);
  std::string out;
  for (unsigned k = 0; k < 4; ++k) {
    const unsigned off = disp + k;
    out += "    mov r4, " + s + "\n";
    if (k < 3) out += "    shr r4, " + hex_imm(24 - 8 * k) + "\n";
    out += "    store byte [" + o + " + r11" + (off ? " + " + hex_imm(off) : std::string()) + "], r4\n";
  }
  return out;
}

}  // namespace detail

inline Fragment blowfish_fragment(std::span<const std::uint8_t> key, std::span<const std::uint8_t> iv,
                                  std::span<const std::uint8_t> plaintext, std::string_view prefix,
                                  std::string_view out) {
  using namespace detail;
  const std::string p(prefix);
  Fragment f;
  const auto sbox_bytes = le_words(constants::kBlowfishS);
  f.data = data(p + "P", le_words(constants::kBlowfishP));
  for (unsigned b = 0; b < 4; ++b) {
    f.data += data(p + "S" + std::to_string(b), std::span(sbox_bytes).subspan(b * 1024, 1024));
  }
  f.data += rodata(p + "key", key) + rodata(p + "iv", iv) + rodata(p + "pt", plaintext) + zero(out, plaintext.size());

  // Key mixing: P byte (b ^ 3) ^= key[b mod keylen], so each 32-bit word takes
  // the key stream big-endian.
  std::string code = R"(
    xor r0, r0
    xor r2, r2
    mov r5, 0x48
$kmix:
    mov r3, r0
    xor r3, 0x3
    load r4, byte [$P + r3]
    load r6, byte [$key + r2]
    xor r4, r6
    store byte [$P + r3], r4
    inc r0
    inc r2
    mov r7, r2
    sub r7, {KL}
    mov r8, r7
    shr r8, 0x3f
    xor r9, r9
    sub r9, r8
    and r9, {KL}
    add r7, r9
    mov r2, r7
    dec r5
    jnz $kmix
    xor r0, r0
    xor r1, r1
    xor r11, r11
    mov r12, 0x9
$ks_p:
)" + blowfish_encrypt_body("p") + R"(
    store dword [$P + r11], r0
    store dword [$P + r11 + 0x4], r1
    add r11, 0x8
    dec r12
    jnz $ks_p
)";
  for (unsigned b = 0; b < 4; ++b) {
    const std::string s = std::to_string(b);
    code += "    xor r11, r11\n    mov r12, 0x80\n$ks_s" + s + ":\n" + blowfish_encrypt_body("s" + s) +
            "    store dword [$S" + s + " + r11], r0\n    store dword [$S" + s +
            " + r11 + 0x4], r1\n    add r11, 0x8\n    dec r12\n    jnz $ks_s" + s + "\n";
  }
  code += "    xor r11, r11\n";
  code += load_be32("$iv", "r13", 0);
  code += load_be32("$iv", "r14", 4);
  code += "    mov r12, {NB}\n$cbc:\n";
  code += load_be32("$pt", "r0", 0);
  code += load_be32("$pt", "r1", 4);
  code += "    xor r0, r13\n    xor r1, r14\n    call $encrypt\n";
  code += store_be32("{OUT}", "r0", 0);
  code += store_be32("{OUT}", "r1", 4);
  code += "    mov r13, r0\n    mov r14, r1\n    add r11, 0x8\n    dec r12\n    jnz $cbc\n";
  f.code = expand(code, prefix,
                  {{"KL", hex_imm(key.size())}, {"NB", hex_imm(plaintext.size() / 8)}, {"OUT", std::string(out)}});
  f.subroutines = expand("$encrypt:" + blowfish_encrypt_body("e") + "    ret\n", prefix);
  return f;
}

// ---------------------------------------------------------------- MD5

inline std::size_t md5_padded_length(std::size_t len) { return ((len + 8) / 64 + 1) * 64; }

inline Fragment md5_fragment(std::span<const std::uint8_t> message, std::string_view prefix, std::string_view out) {
  using namespace detail;
  const std::string p(prefix);
  const std::size_t padded = md5_padded_length(message.size());
  Fragment f;
  if (!message.empty()) f.data += rodata(p + "msg", message);
  f.data += rodata(p + "K", le_words(constants::kMd5K)) + rodata(p + "R", constants::kMd5Shift) +
            zero(p + "buf", padded) + zero(p + "hs", 16) + zero(out, 16);

  std::string code;
  if (!message.empty()) {
    code += R"(
    xor r0, r0
    mov r5, {LEN}
$copy:
    load r1, byte [$msg + r0]
    store byte [$buf + r0], r1
    inc r0
    dec r5
    jnz $copy
)";
  }
  code += R"(
    store byte [$buf + {LEN}], 0x80
    mov r1, {BITS}
    store qword [$buf + {LENPOS}], r1
    mov r0, 0x67452301
    mov r1, 0xefcdab89
    mov r2, 0x98badcfe
    mov r3, 0x10325476
    xor r12, r12
    mov r13, {CHUNKS}
$chunk:
    store dword [$hs], r0
    store dword [$hs + 0x4], r1
    store dword [$hs + 0x8], r2
    store dword [$hs + 0xc], r3
    xor r4, r4
)";
  const char* round_f[4] = {
      // (B & C) | (~B & D)
      "    mov r6, r1\n    and r6, r2\n    mov r7, r1\n    xor r7, 0xffffffff\n    and r7, r3\n    or r6, r7\n",
      // (B & D) | (C & ~D)
      "    mov r6, r3\n    xor r6, 0xffffffff\n    and r6, r2\n    mov r7, r1\n    and r7, r3\n    or r6, r7\n",
      // B ^ C ^ D
      "    mov r6, r1\n    xor r6, r2\n    xor r6, r3\n",
      // C ^ (B | ~D)
      "    mov r6, r3\n    xor r6, 0xffffffff\n    or r6, r1\n    xor r6, r2\n",
  };
  const char* round_g[4] = {
      "    mov r7, r4\n    and r7, 0xf\n",
      "    lea r7, [r4 + r4*4 + 0x1]\n    and r7, 0xf\n",
      "    lea r7, [r4 + r4*2 + 0x5]\n    and r7, 0xf\n",
      "    lea r7, [r4*8]\n    sub r7, r4\n    and r7, 0xf\n",
  };
  for (int round = 0; round < 4; ++round) {
    const std::string label = "$r" + std::to_string(round + 1);
    code += "    mov r5, 0x10\n" + label + ":\n";
    code += round_f[round];
    code += "    add r6, r0\n    load r7, dword [$K + r4*4]\n    add r6, r7\n";
    code += round_g[round];
    code += R"(    lea r7, [r12 + r7*4]
    load r7, dword [$buf + r7]
    add r6, r7
    and r6, 0xffffffff
    load r8, byte [$R + r4]
    mov r9, r6
    shl r6, r8
    mov r10, 0x20
    sub r10, r8
    shr r9, r10
    or r6, r9
    and r6, 0xffffffff
    mov r0, r3
    mov r3, r2
    mov r2, r1
    add r1, r6
    and r1, 0xffffffff
    inc r4
    dec r5
    jnz )" + label + "\n";
  }
  code += R"(
    load r6, dword [$hs]
    add r0, r6
    and r0, 0xffffffff
    load r6, dword [$hs + 0x4]
    add r1, r6
    and r1, 0xffffffff
    load r6, dword [$hs + 0x8]
    add r2, r6
    and r2, 0xffffffff
    load r6, dword [$hs + 0xc]
    add r3, r6
    and r3, 0xffffffff
    add r12, 0x40
    dec r13
    jnz $chunk
    store dword [{OUT}], r0
    store dword [{OUT} + 0x4], r1
    store dword [{OUT} + 0x8], r2
    store dword [{OUT} + 0xc], r3
)";
  f.code = expand(code, prefix,
                  {{"LEN", hex_imm(message.size())},
                   {"BITS", hex_imm(static_cast<std::uint64_t>(message.size()) * 8)},
                   {"LENPOS", hex_imm(padded - 8)},
                   {"CHUNKS", hex_imm(padded / 64)},
                   {"OUT", std::string(out)}});
  return f;
}

// ---------------------------------------------------------------- modular exponentiation

/// out = base^exponent mod modulus. Requires 1 < modulus < 2^63 and base < modulus:
/// the branch-free modular doubling relies on the top bit staying clear.
inline Fragment modexp_fragment(std::uint64_t modulus, std::uint64_t exponent, std::uint64_t base,
                                std::string_view prefix, std::string_view out) {
  using namespace detail;
  const std::string p(prefix);
  Fragment f;
  f.data = rodata(p + "n", le64(modulus)) + rodata(p + "e", le64(exponent)) + rodata(p + "m", le64(base)) +
           zero(out, 8);
  // r6 -= r2 unless that would go negative; r6 < 2*r2 on entry.
  const std::string reduce = R"(    mov r8, r6
    sub r8, r2
    mov r9, r8
    shr r9, 0x3f
    xor r10, r10
    sub r10, r9
    and r10, r2
    add r8, r10
    mov r6, r8
)";
  f.code = expand(R"(
    load r0, qword [$m]
    load r1, qword [$e]
    load r2, qword [$n]
    mov r3, 0x1
$exp_loop:
    test r1, 0x1
    jz $square
    mov r4, r3
    mov r5, r0
    call $mulmod
    mov r3, r6
$square:
    mov r4, r0
    mov r5, r0
    call $mulmod
    mov r0, r6
    shr r1, 0x1
    jnz $exp_loop
    store qword [{OUT}], r3
)",
                  prefix, {{"OUT", std::string(out)}});
  f.subroutines = expand(R"(
$mulmod:
    xor r6, r6
    mov r7, 0x40
$mm_loop:
    add r6, r6
)" + reduce + R"(    mov r9, r5
    shr r9, 0x3f
    xor r10, r10
    sub r10, r9
    and r10, r4
    add r6, r10
)" + reduce + R"(    shl r5, 0x1
    dec r7
    jnz $mm_loop
    ret
)",
                         prefix);
  return f;
}

/// Joins fragments into one program: data, main code of each fragment in
/// order, a single halt, then all subroutines.
inline std::string link_fragments(std::string_view label, std::string_view outputs,
                                  std::span<const Fragment> fragments) {
  std::string text = ".label " + std::string(label) + "\n.meta outputs " + std::string(outputs) + "\n";
  for (const auto& f : fragments) text += f.data;
  text += "main:\n";
  for (const auto& f : fragments) text += f.code;
  text += "    halt\n";
  for (const auto& f : fragments) text += f.subroutines;
  return text;
}

}  // namespace cryptoknight::synth
