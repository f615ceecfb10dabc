#pragma once

#include <string>
#include <vector>

#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/isa/assembler.hpp"
#include "cryptoknight/isa/validate.hpp"
#include "cryptoknight/synth/codegen.hpp"
#include "cryptoknight/synth/inject.hpp"
#include "cryptoknight/synth/obfuscation.hpp"
#include "cryptoknight/synth/spec.hpp"
#include "cryptoknight/synth/templates.hpp"

namespace cryptoknight::synth {

/// The un-obfuscated program for a label and payload.
inline isa::Program build_template(Label label, const Payload& pl) {
  validate_payload(label, pl);
  std::vector<Fragment> fragments;
  std::string outputs = "out";
  switch (label) {
    case Label::aes:
      fragments.push_back(aes_fragment(pl.key, pl.iv, pl.plaintext, "aes_", "out"));
      break;
    case Label::rc4:
      fragments.push_back(rc4_fragment(pl.key, pl.plaintext, "rc4_", "out"));
      break;
    case Label::blowfish:
      fragments.push_back(blowfish_fragment(pl.key, pl.iv, pl.plaintext, "bf_", "out"));
      break;
    case Label::md5:
      fragments.push_back(md5_fragment(pl.plaintext, "md5_", "out"));
      break;
    case Label::rsa: {
      const auto k = rsa_key_of(pl.key);
      fragments.push_back(modexp_fragment(k.n, k.e, load_le(pl.plaintext), "rsa_", "out"));
      break;
    }
    case Label::rsa_aes: {
      const auto k = rsa_key_of(pl.key);
      const auto aes_key = std::span(pl.key).subspan(16, 16);
      fragments.push_back(modexp_fragment(k.n, k.e, rsa_wrapped_message(aes_key, k.n), "rsa_", "wrapped"));
      fragments.push_back(aes_fragment(aes_key, pl.iv, pl.plaintext, "aes_", "out"));
      outputs = "wrapped,out";
      break;
    }
    default:
      throw SynthError("unsupported label");
  }
  auto p = isa::parse_program(link_fragments(tag_of(label), outputs, fragments));
  isa::require_valid(p);
  return p;
}

/// Template, then data obfuscation, then injected arithmetic, then codegen
/// variation. A pure function of the spec.
inline isa::Program synthesize(const SynthSpec& spec) {
  validate_spec(spec);
  auto p = build_template(spec.label, spec.payload);
  p = apply_obfuscation(p, spec.obfuscation, derive_seed(spec.seed, 1));
  p = inject_arithmetic(p, derive_seed(spec.seed, 2), spec.inject_mean);
  p = codegen_variants(p, spec.codegen);
  isa::require_valid(p);
  return p;
}

}  // namespace cryptoknight::synth
