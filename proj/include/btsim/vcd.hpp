// Value change dump export of a run trace (timescale 1 us).
#pragma once

#include <iosfwd>
#include <string>

#include "btsim/trace.hpp"

namespace btsim {

// Per device: state (4-bit code, DeviceState order), enable_rx_RF,
// enable_tx_RF, channel (7 bits, x when untuned).
void write_vcd(std::ostream& out, const RunTrace& trace);

struct VcdReport {
  bool ok = true;
  std::string error;  // first problem, prefixed by its line number
  int signals = 0;
  int changes = 0;
  long long last_time = -1;
};

// Checks a well-formed header, declared identifiers only, value widths and
// strictly increasing timestamps.
VcdReport check_vcd(std::istream& in);

}  // namespace btsim
