// Minimal link manager: PDUs negotiating sniff, hold and park, and the timers
// that gate a slave's radio in those modes.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace btsim {

inline constexpr std::uint8_t kLlidLmp = 3;

enum class LmpOpcode : std::uint8_t {
  SniffReq = 1,
  HoldReq = 2,
  ParkReq = 3,
  Accepted = 4,
  NotAccepted = 5,
  Unsniff = 6,
  Detach = 7,
};
const char* to_string(LmpOpcode op);

enum class LinkMode : std::uint8_t { Active, Sniff, Hold, Park };
const char* to_string(LinkMode m);

// Times are in slots except anchor, which is a CLK value (half-slot ticks).
struct LmpPdu {
  LmpOpcode opcode = LmpOpcode::Detach;
  LmpOpcode about = LmpOpcode::Detach;  // Accepted/NotAccepted: the request answered
  std::uint32_t interval = 0;           // T_sniff or T_hold
  std::uint32_t attempt = 0;            // sniff_timeout_time
  std::uint32_t anchor = 0;             // Accepted: agreed anchor CLK

  bool operator==(const LmpPdu&) const = default;
};

std::vector<std::uint8_t> encode(const LmpPdu& pdu);
// nullopt for unknown opcodes or truncated payloads.
std::optional<LmpPdu> decode_lmp(const std::vector<std::uint8_t>& payload);

// Empty string when the request is acceptable, otherwise the reason.
std::string validate_request(const LmpPdu& pdu);

struct ModeTimers {
  LinkMode mode = LinkMode::Active;
  std::uint32_t sniff_anchor = 0;   // CLK
  std::uint32_t t_sniff = 0;        // slots
  std::uint32_t sniff_attempt = 0;  // slots
  std::uint32_t hold_until = 0;     // CLK

  bool operator==(const ModeTimers&) const = default;
};

// Anchor CLK for an Accepted exchanged in the slot containing clk: the start
// of the next master-to-slave slot.
std::uint32_t next_anchor(std::uint32_t clk);

// Timers both sides install for an accepted request.
ModeTimers timers_for(const LmpPdu& request, std::uint32_t anchor);

// True iff the slot containing clk lies in [anchor + k*T, anchor + k*T + attempt).
bool sniff_window_open(const ModeTimers& timers, std::uint32_t clk);

// True iff clk has reached hold_until (modulo the 28-bit clock).
bool clk_reached(std::uint32_t clk, std::uint32_t target);

}  // namespace btsim
