#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cryptoknight/common/error.hpp"
#include "cryptoknight/isa/program.hpp"

namespace cryptoknight::isa {

/// Builds a new instruction stream from an old one while keeping branch
/// targets consistent. Targets inside emitted instructions name OLD addresses
/// unless the instruction is emitted with `emit_to`, which names a fresh label.
class Rewriter {
 public:
  using LabelId = std::uint32_t;

  explicit Rewriter(const Program& source)
      : source_(source), old_to_new_(source.instructions.size(), kUnbound) {}

  /// The next emitted instruction is where branches to `old_addr` land.
  void bind_old(std::uint32_t old_addr) {
    if (old_to_new_.at(old_addr) == kUnbound) old_to_new_[old_addr] = static_cast<std::uint32_t>(out_.size());
  }

  LabelId new_label() {
    labels_.push_back(kUnbound);
    return static_cast<LabelId>(labels_.size() - 1);
  }

  void bind(LabelId label) { labels_.at(label) = static_cast<std::uint32_t>(out_.size()); }

  void emit(Instruction inst) { out_.push_back({std::move(inst), std::nullopt}); }

  void emit_to(Instruction inst, LabelId label) { out_.push_back({std::move(inst), label}); }

  /// Copies old instruction `addr` verbatim, binding its address first.
  void copy(std::uint32_t addr) {
    bind_old(addr);
    emit(source_.instructions.at(addr));
  }

  std::size_t emitted() const { return out_.size(); }

  /// Produces the rewritten program with data, label and metadata carried over.
  Program finish(std::vector<DataObject> data_objects) const {
    Program p;
    p.data_objects = std::move(data_objects);
    p.label = source_.label;
    p.metadata = source_.metadata;
    p.entry = resolve_old(source_.entry);
    p.instructions.reserve(out_.size());
    for (const auto& [inst, label] : out_) {
      Instruction copy = inst;
      if (auto* t = std::get_if<Target>(&copy.dst)) {
        t->addr = label ? labels_.at(*label) : resolve_old(t->addr);
        if (t->addr == kUnbound) throw Error("rewriter: unbound label");
      }
      p.instructions.push_back(copy);
    }
    p.renumber();
    return p;
  }

  Program finish() const { return finish(source_.data_objects); }

 private:
  static constexpr std::uint32_t kUnbound = ~std::uint32_t{0};

  std::uint32_t resolve_old(std::uint32_t old_addr) const {
    const auto v = old_to_new_.at(old_addr);
    if (v == kUnbound) throw Error("rewriter: branch to dropped instruction " + std::to_string(old_addr));
    return v;
  }

  struct Pending {
    Instruction inst;
    std::optional<LabelId> label;
  };

  const Program& source_;
  std::vector<std::uint32_t> old_to_new_;
  std::vector<std::uint32_t> labels_;
  std::vector<Pending> out_;
};

}  // namespace cryptoknight::isa
