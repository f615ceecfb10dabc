#pragma once

// Data-layout obfuscation: aggregation packs several data objects into one
// pool addressed by offset; splitting stores a table as two random shares
// that are recombined with xor at every load.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cryptoknight/common/rng.hpp"
#include "cryptoknight/isa/analysis.hpp"
#include "cryptoknight/isa/rewriter.hpp"
#include "cryptoknight/isa/validate.hpp"
#include "cryptoknight/synth/spec.hpp"

namespace cryptoknight::synth {

inline constexpr std::string_view kOutputsKey = "outputs";
inline constexpr std::string_view kObfuscationKey = "obfuscation";

/// Names listed under the `outputs` metadata key.
inline std::set<std::string> output_objects(const isa::Program& p) {
  std::set<std::string> out;
  auto it = p.metadata.find(std::string(kOutputsKey));
  if (it == p.metadata.end()) return out;
  std::string_view rest = it->second;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto name = rest.substr(0, comma);
    if (!name.empty()) out.emplace(name);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

namespace detail {

inline std::string unique_name(const isa::Program& p, std::string base) {
  std::string name = base;
  for (unsigned k = 1; p.find_object(name); ++k) name = base + std::to_string(k);
  return name;
}

/// Rewrites object ids through `map`; every referenced id must map somewhere.
inline void remap_objects(isa::Program& p, const std::vector<std::optional<std::uint32_t>>& map,
                          const std::vector<std::int64_t>& disp_shift) {
  for (auto& inst : p.instructions) {
    if (auto* m = isa::mem_operand(inst); m && m->object) {
      const auto old = *m->object;
      if (!map.at(old)) throw Error("obfuscation: reference to a dropped object");
      m->object = *map[old];
      m->disp += disp_shift.at(old);
    }
  }
}

inline isa::Program aggregate(const isa::Program& p, Rng& rng, bool& applied) {
  const auto outputs = output_objects(p);
  std::vector<std::uint32_t> ro, rw;
  for (std::uint32_t i = 0; i < p.data_objects.size(); ++i) {
    const auto& obj = p.data_objects[i];
    if (!obj.is_mutable) ro.push_back(i);
    else if (!outputs.count(obj.name)) rw.push_back(i);
  }
  applied = ro.size() >= 2 || rw.size() >= 2;
  if (!applied) return p;

  const std::size_t n = p.data_objects.size();
  std::vector<bool> merged(n, false);
  std::vector<std::optional<std::uint32_t>> map(n);
  std::vector<std::int64_t> shift(n, 0);
  std::vector<isa::DataObject> objects;

  struct Group {
    std::vector<std::uint32_t> members;
    std::string name;
    bool is_mutable;
  };
  std::vector<Group> groups;
  if (ro.size() >= 2) groups.push_back({ro, unique_name(p, "const_pool"), false});
  if (rw.size() >= 2) groups.push_back({rw, unique_name(p, "work_pool"), true});
  for (auto& g : groups) {
    rng.shuffle(std::span(g.members));
    for (auto id : g.members) merged[id] = true;
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    if (merged[i]) continue;
    map[i] = static_cast<std::uint32_t>(objects.size());
    objects.push_back(p.data_objects[i]);
  }
  for (const auto& g : groups) {
    isa::DataObject pool{g.name, {}, g.is_mutable};
    const auto id = static_cast<std::uint32_t>(objects.size());
    for (auto member : g.members) {
      map[member] = id;
      shift[member] = static_cast<std::int64_t>(pool.bytes.size());
      const auto& src = p.data_objects[member].bytes;
      pool.bytes.insert(pool.bytes.end(), src.begin(), src.end());
    }
    objects.push_back(std::move(pool));
  }
  isa::Program out = p;
  out.data_objects = std::move(objects);
  remap_objects(out, map, shift);
  return out;
}

inline isa::Program split(const isa::Program& p, Rng& rng, bool& applied) {
  const std::size_t n = p.data_objects.size();
  std::vector<std::uint32_t> candidates;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!p.data_objects[i].is_mutable) candidates.push_back(i);
  }
  std::vector<bool> chosen(n, false);
  bool any = false;
  for (auto id : candidates) any |= (chosen[id] = rng.chance(0.5));
  if (!any && !candidates.empty()) chosen[candidates[rng.below(candidates.size())]] = true;

  // Shares live after the original objects: share0 is the mask, share1 the masked data.
  std::vector<isa::DataObject> objects = p.data_objects;
  std::vector<std::uint32_t> share0(n, 0), share1(n, 0);
  isa::Program naming = p;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!chosen[i]) continue;
    const auto& obj = p.data_objects[i];
    isa::DataObject mask{unique_name(naming, obj.name + "_s0"), Bytes(obj.bytes.size()), false};
    naming.data_objects.push_back(mask);
    isa::DataObject masked{unique_name(naming, obj.name + "_s1"), obj.bytes, false};
    naming.data_objects.push_back(masked);
    for (std::size_t k = 0; k < obj.bytes.size(); ++k) {
      mask.bytes[k] = rng.byte();
      masked.bytes[k] ^= mask.bytes[k];
    }
    share0[i] = static_cast<std::uint32_t>(objects.size());
    objects.push_back(std::move(mask));
    share1[i] = static_cast<std::uint32_t>(objects.size());
    objects.push_back(std::move(masked));
  }

  const auto live = isa::compute_liveness(p);
  isa::Rewriter rw(p);
  std::vector<bool> still_used(n, false);
  std::size_t rewritten = 0;
  for (std::uint32_t i = 0; i < p.instructions.size(); ++i) {
    const auto& inst = p.instructions[i];
    const auto* m = isa::mem_operand(inst);
    if (!m || !m->object) {
      rw.copy(i);
      continue;
    }
    const auto obj = *m->object;
    if (!chosen[obj] || inst.opcode != isa::Opcode::load) {
      still_used[obj] = true;
      rw.copy(i);
      continue;
    }
    const auto dst = std::get<isa::Reg>(inst.dst);
    const bool wide = dst.cls == isa::RegClass::wide;
    const isa::RegSet busy = live.live_in[i] | live.live_out[i] | isa::address_uses(*m) | isa::bit_of(dst);
    const bool flags_free = wide || !(live.live_out[i] & isa::kFlagsBit);
    const auto free = wide ? isa::free_wides(busy) : isa::free_scalars(busy);
    if (free.empty() || !flags_free) {
      still_used[obj] = true;
      rw.copy(i);
      continue;
    }
    const isa::Reg tmp = wide ? isa::w(free[rng.below(free.size())]) : isa::r(free[rng.below(free.size())]);
    isa::Mem m1 = *m, m0 = *m;
    m1.object = share1[obj];
    m0.object = share0[obj];
    rw.bind_old(i);
    rw.emit(isa::make(isa::Opcode::load, tmp, m1));
    rw.emit(isa::make(isa::Opcode::load, dst, m0));
    rw.emit(isa::make(wide ? isa::Opcode::pxor : isa::Opcode::xor_, dst, tmp));
    ++rewritten;
  }
  applied = rewritten > 0;
  if (!applied) return p;

  isa::Program out = rw.finish(objects);
  // Drop originals that no longer have any load site, and shares that were never used.
  std::vector<bool> referenced(out.data_objects.size(), false);
  for (const auto& inst : out.instructions) {
    if (auto* mm = isa::mem_operand(inst); mm && mm->object) referenced[*mm->object] = true;
  }
  const auto outputs = output_objects(p);
  std::vector<isa::DataObject> kept;
  std::vector<std::optional<std::uint32_t>> map(out.data_objects.size());
  for (std::uint32_t i = 0; i < out.data_objects.size(); ++i) {
    const bool original = i < n;
    const bool keep = referenced[i] || (original && !chosen[i]) || outputs.count(out.data_objects[i].name);
    if (!keep) continue;
    map[i] = static_cast<std::uint32_t>(kept.size());
    kept.push_back(out.data_objects[i]);
  }
  out.data_objects = std::move(kept);
  remap_objects(out, map, std::vector<std::int64_t>(map.size(), 0));
  return out;
}

}  // namespace detail

/// Applies one data-layout transform. When the mode finds nothing to act on,
/// the program is returned unchanged and the fallback is noted in metadata.
inline isa::Program apply_obfuscation(const isa::Program& p, Obfuscation mode, std::uint64_t seed) {
  isa::require_valid(p);
  if (mode == Obfuscation::normal) return p;
  Rng rng(seed);
  bool applied = false;
  isa::Program out = mode == Obfuscation::aggregation ? detail::aggregate(p, rng, applied) : detail::split(p, rng, applied);
  out.metadata[std::string(kObfuscationKey)] =
      applied ? std::string(name_of(mode)) : "normal(" + std::string(name_of(mode)) + "-fallback)";
  return out;
}

}  // namespace cryptoknight::synth
