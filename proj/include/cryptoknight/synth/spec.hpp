#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/common/error.hpp"
#include "cryptoknight/common/rng.hpp"

namespace cryptoknight::synth {

enum class Label : std::uint8_t { aes, rc4, blowfish, md5, rsa, rsa_aes };

inline constexpr std::array<std::string_view, 6> kLabelTags = {"aes", "rc4", "blowfish", "md5", "rsa", "rsa+aes"};

inline std::string_view tag_of(Label label) { return kLabelTags[static_cast<std::size_t>(label)]; }

/// Case-insensitive; accepts "rsa+aes" and "r/a" for the composite.
inline std::optional<Label> label_from_tag(std::string_view tag) {
  std::string low(tag);
  for (auto& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (low == "r/a") low = "rsa+aes";
  for (std::size_t i = 0; i < kLabelTags.size(); ++i) {
    if (kLabelTags[i] == low) return static_cast<Label>(i);
  }
  return std::nullopt;
}

enum class Obfuscation : std::uint8_t { normal, aggregation, split };

inline constexpr std::array<std::string_view, 3> kObfuscationNames = {"normal", "aggregation", "split"};

inline std::string_view name_of(Obfuscation mode) { return kObfuscationNames[static_cast<std::size_t>(mode)]; }

inline std::optional<Obfuscation> obfuscation_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kObfuscationNames.size(); ++i) {
    if (kObfuscationNames[i] == name) return static_cast<Obfuscation>(i);
  }
  return std::nullopt;
}

struct CodegenOptions {
  std::uint64_t rename_seed = 0;    // 0 keeps register names
  std::uint64_t schedule_seed = 0;  // 0 keeps instruction order
  unsigned unroll = 1;              // 1, 2 or 4
  bool operator==(const CodegenOptions&) const = default;
};

/// Key/IV/plaintext bytes. RSA packs the modulus and exponent into `key`
/// (8 bytes little-endian each) and the message into `plaintext` (8 bytes).
/// The composite appends the 16-byte AES key to the RSA key; its IV and
/// plaintext feed the AES stage, and the wrapped value is the first 8 AES key
/// bytes read little-endian, reduced mod n.
struct Payload {
  Bytes key;
  Bytes iv;
  Bytes plaintext;
  bool operator==(const Payload&) const = default;
};

struct SynthSpec {
  Label label = Label::aes;
  Obfuscation obfuscation = Obfuscation::normal;
  CodegenOptions codegen;
  Payload payload;
  std::uint64_t seed = 0;
  double inject_mean = 0.0;  // mean number of injected snippets; 0 disables injection
  bool operator==(const SynthSpec&) const = default;
};

inline constexpr std::uint64_t kRsaExponent = 65537;
inline constexpr std::uint64_t kRsaModulusLimit = std::uint64_t{1} << 63;
inline constexpr double kDefaultInjectMean = 3.0;

struct RsaKey {
  std::uint64_t n = 0;
  std::uint64_t e = 0;
};

inline RsaKey rsa_key_of(std::span<const std::uint8_t> key) {
  return {load_le(key.subspan(0, 8)), load_le(key.subspan(8, 8))};
}

inline std::uint64_t rsa_wrapped_message(std::span<const std::uint8_t> aes_key, std::uint64_t n) {
  return load_le(aes_key.subspan(0, 8)) % n;
}

/// Throws SynthError if the payload does not fit the label's templates.
inline void validate_payload(Label label, const Payload& pl) {
  auto fail = [&](const std::string& what) {
    throw SynthError(std::string(tag_of(label)) + " payload: " + what);
  };
  auto check_rsa = [&](std::span<const std::uint8_t> key) {
    if (key.size() < 16) fail("key must hold modulus and exponent (16 bytes)");
    const auto [n, e] = rsa_key_of(key);
    if (n < 2 || n >= kRsaModulusLimit) fail("modulus must lie in [2, 2^63)");
    (void)e;
  };
  switch (label) {
    case Label::aes:
      if (pl.key.size() != 16) fail("key must be 16 bytes");
      if (pl.iv.size() != 16) fail("iv must be 16 bytes");
      if (pl.plaintext.empty() || pl.plaintext.size() % 16 != 0) fail("plaintext must be a positive multiple of 16 bytes");
      break;
    case Label::rc4:
      if (pl.key.size() < 5 || pl.key.size() > 16) fail("key must be 5-16 bytes");
      if (!pl.iv.empty()) fail("iv must be empty");
      if (pl.plaintext.empty()) fail("plaintext must be non-empty");
      break;
    case Label::blowfish:
      if (pl.key.size() < 4 || pl.key.size() > 56) fail("key must be 4-56 bytes");
      if (pl.iv.size() != 8) fail("iv must be 8 bytes");
      if (pl.plaintext.empty() || pl.plaintext.size() % 8 != 0) fail("plaintext must be a positive multiple of 8 bytes");
      break;
    case Label::md5:
      if (!pl.key.empty() || !pl.iv.empty()) fail("key and iv must be empty");
      break;
    case Label::rsa: {
      if (pl.key.size() != 16) fail("key must be 16 bytes");
      check_rsa(pl.key);
      if (!pl.iv.empty()) fail("iv must be empty");
      if (pl.plaintext.size() != 8) fail("plaintext must be 8 bytes");
      if (load_le(pl.plaintext) >= rsa_key_of(pl.key).n) fail("message must be below the modulus");
      break;
    }
    case Label::rsa_aes:
      if (pl.key.size() != 32) fail("key must be 32 bytes (modulus, exponent, AES key)");
      check_rsa(pl.key);
      if (pl.iv.size() != 16) fail("iv must be 16 bytes");
      if (pl.plaintext.empty() || pl.plaintext.size() % 16 != 0) fail("plaintext must be a positive multiple of 16 bytes");
      break;
    default:
      throw SynthError("unsupported label");
  }
}

inline void validate_spec(const SynthSpec& spec) {
  if (static_cast<std::size_t>(spec.label) >= kLabelTags.size()) throw SynthError("unsupported label");
  if (static_cast<std::size_t>(spec.obfuscation) >= kObfuscationNames.size()) throw SynthError("unsupported obfuscation");
  const unsigned u = spec.codegen.unroll;
  if (u != 1 && u != 2 && u != 4) throw SynthError("unroll factor must be 1, 2 or 4");
  if (!(spec.inject_mean >= 0.0) || spec.inject_mean > 64.0) throw SynthError("inject mean must lie in [0, 64]");
  validate_payload(spec.label, spec.payload);
}

namespace detail {

inline std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % m);
}

inline std::uint64_t powmod(std::uint64_t b, std::uint64_t e, std::uint64_t m) {
  std::uint64_t r = 1 % m;
  b %= m;
  while (e) {
    if (e & 1) r = mulmod(r, b, m);
    b = mulmod(b, b, m);
    e >>= 1;
  }
  return r;
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
inline bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  for (std::uint64_t p : {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37}) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  unsigned s = 0;
  while (!(d & 1)) {
    d >>= 1;
    ++s;
  }
  for (std::uint64_t a : {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37}) {
    std::uint64_t x = powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (unsigned i = 1; i < s; ++i) {
      x = mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

inline std::uint64_t random_prime(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
  while (true) {
    const std::uint64_t c = (lo + rng.below(hi - lo)) | 1;
    if (is_prime(c)) return c;
  }
}

inline Bytes random_bytes(Rng& rng, std::size_t n) {
  Bytes out(n);
  for (auto& b : out) b = rng.byte();
  return out;
}

}  // namespace detail

/// A 63-bit RSA modulus n = p*q with gcd(65537, (p-1)(q-1)) = 1.
inline RsaKey random_rsa_key(Rng& rng) {
  while (true) {
    // p, q in [2^30.5, 2^31.5) keeps n in [2^61, 2^63).
    const std::uint64_t lo = 0x5a827999ULL, hi = 0xb504f333ULL;
    const std::uint64_t p = detail::random_prime(rng, lo, hi);
    const std::uint64_t q = detail::random_prime(rng, lo, hi);
    if (p == q) continue;
    const std::uint64_t phi = (p - 1) * (q - 1);
    if (std::gcd(phi, kRsaExponent) != 1) continue;
    return {p * q, kRsaExponent};
  }
}

inline Bytes rsa_key_bytes(const RsaKey& k) {
  Bytes out(16);
  store_le(std::span(out).subspan(0, 8), k.n);
  store_le(std::span(out).subspan(8, 8), k.e);
  return out;
}

inline Payload random_payload(Label label, Rng& rng) {
  using detail::random_bytes;
  Payload pl;
  switch (label) {
    case Label::aes:
      pl.key = random_bytes(rng, 16);
      pl.iv = random_bytes(rng, 16);
      pl.plaintext = random_bytes(rng, 16 * rng.range(1, 4));
      break;
    case Label::rc4:
      pl.key = random_bytes(rng, rng.range(5, 16));
      pl.plaintext = random_bytes(rng, rng.range(16, 64));
      break;
    case Label::blowfish:
      pl.key = random_bytes(rng, rng.range(4, 56));
      pl.iv = random_bytes(rng, 8);
      pl.plaintext = random_bytes(rng, 8 * rng.range(1, 8));
      break;
    case Label::md5:
      pl.plaintext = random_bytes(rng, rng.range(0, 119));
      break;
    case Label::rsa: {
      const auto k = random_rsa_key(rng);
      pl.key = rsa_key_bytes(k);
      pl.plaintext.resize(8);
      store_le(std::span(pl.plaintext), 2 + rng.below(k.n - 2));
      break;
    }
    case Label::rsa_aes: {
      const auto k = random_rsa_key(rng);
      pl.key = rsa_key_bytes(k);
      const auto aes_key = random_bytes(rng, 16);
      pl.key.insert(pl.key.end(), aes_key.begin(), aes_key.end());
      pl.iv = random_bytes(rng, 16);
      pl.plaintext = random_bytes(rng, 16 * rng.range(1, 4));
      break;
    }
  }
  return pl;
}

/// Draws every free choice of a sample from `seed`.
inline SynthSpec random_spec(Label label, std::uint64_t seed, double inject_mean = kDefaultInjectMean) {
  Rng rng(derive_seed(seed, 0x5350454355ULL));
  SynthSpec spec;
  spec.label = label;
  spec.seed = seed;
  spec.inject_mean = inject_mean;
  spec.obfuscation = static_cast<Obfuscation>(rng.below(3));
  spec.codegen.rename_seed = rng.chance(0.75) ? rng.next() | 1 : 0;
  spec.codegen.schedule_seed = rng.chance(0.75) ? rng.next() | 1 : 0;
  static constexpr unsigned kUnroll[] = {1, 2, 4};
  spec.codegen.unroll = kUnroll[rng.below(3)];
  spec.payload = random_payload(label, rng);
  return spec;
}

}  // namespace cryptoknight::synth
