#pragma once

#include <cstdio>
#include <ostream>

#include "cryptoknight/tracer/trace.hpp"

namespace cryptoknight::tracer {

/// Debug dump: one JSON object per event, {addr, opcode, head, tail, write_len, dH}.
inline void write_trace_dump(std::ostream& out, const Trace& trace) {
  char buf[160];
  for (const auto& e : trace.events) {
    const unsigned len = e.write ? e.write->length : 0;
    const double dh = e.write ? e.write->entropy_after - e.write->entropy_before : 0.0;
    std::snprintf(buf, sizeof buf, "{\"addr\":%u,\"opcode\":\"%s\",\"head\":%s,\"tail\":%s,\"write_len\":%u,\"dH\":%.17g}\n",
                  e.addr, std::string(isa::name_of(e.opcode)).c_str(), e.is_head ? "true" : "false",
                  e.is_tail ? "true" : "false", len, dh);
    out << buf;
  }
}

}  // namespace cryptoknight::tracer
