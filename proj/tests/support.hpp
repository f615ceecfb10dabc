#pragma once

#include <string>
#include <string_view>

#include "cryptoknight/common/bytes.hpp"
#include "cryptoknight/isa/program.hpp"
#include "cryptoknight/tracer/machine.hpp"

namespace testing_support {

inline constexpr std::uint64_t kStepLimit = 50'000'000;

/// Final bytes of `object` after running `p` to halt.
inline cryptoknight::Bytes run_output(const cryptoknight::isa::Program& p, std::string_view object = "out") {
  const auto trace = cryptoknight::tracer::execute(p, kStepLimit);
  if (!trace.halted) throw cryptoknight::Error("program did not halt");
  return cryptoknight::tracer::object_bytes(trace, object);
}

inline cryptoknight::Bytes hex(std::string_view text) { return *cryptoknight::from_hex(text); }

}  // namespace testing_support
