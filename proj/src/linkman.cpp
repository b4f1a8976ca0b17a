#include "btsim/linkman.hpp"

#include "btsim/hopsel.hpp"

namespace btsim {

const char* to_string(LmpOpcode op) {
  switch (op) {
    case LmpOpcode::SniffReq: return "SniffReq";
    case LmpOpcode::HoldReq: return "HoldReq";
    case LmpOpcode::ParkReq: return "ParkReq";
    case LmpOpcode::Accepted: return "Accepted";
    case LmpOpcode::NotAccepted: return "NotAccepted";
    case LmpOpcode::Unsniff: return "Unsniff";
    case LmpOpcode::Detach: return "Detach";
  }
  return "?";
}

const char* to_string(LinkMode m) {
  switch (m) {
    case LinkMode::Active: return "Active";
    case LinkMode::Sniff: return "Sniff";
    case LinkMode::Hold: return "Hold";
    case LinkMode::Park: return "Park";
  }
  return "?";
}

namespace {

void put(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

std::uint32_t get(const std::vector<std::uint8_t>& in, std::size_t at, int bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint32_t(in[at + std::size_t(i)]) << (8 * i);
  return v;
}

bool known(std::uint8_t op) { return op >= 1 && op <= 7; }

}  // namespace

// Layout: opcode, about, interval(2), attempt(2), anchor(4); 10 bytes.
std::vector<std::uint8_t> encode(const LmpPdu& pdu) {
  std::vector<std::uint8_t> out;
  out.push_back(std::uint8_t(pdu.opcode));
  out.push_back(std::uint8_t(pdu.about));
  put(out, pdu.interval, 2);
  put(out, pdu.attempt, 2);
  put(out, pdu.anchor, 4);
  return out;
}

std::optional<LmpPdu> decode_lmp(const std::vector<std::uint8_t>& payload) {
  if (payload.size() != 10 || !known(payload[0]) || !known(payload[1])) return std::nullopt;
  LmpPdu pdu;
  pdu.opcode = LmpOpcode(payload[0]);
  pdu.about = LmpOpcode(payload[1]);
  pdu.interval = get(payload, 2, 2);
  pdu.attempt = get(payload, 4, 2);
  pdu.anchor = get(payload, 6, 4);
  return pdu;
}

std::string validate_request(const LmpPdu& pdu) {
  switch (pdu.opcode) {
    case LmpOpcode::SniffReq:
      if (pdu.interval == 0) return "T_sniff must be positive";
      if (pdu.interval % 2 != 0) return "T_sniff must be even";
      if (pdu.attempt == 0) return "sniff_timeout_time must be positive";
      if (pdu.attempt > pdu.interval) return "sniff_timeout_time exceeds T_sniff";
      return "";
    case LmpOpcode::HoldReq:
    case LmpOpcode::ParkReq:
    case LmpOpcode::Unsniff:
    case LmpOpcode::Detach:
      return "";
    case LmpOpcode::Accepted:
    case LmpOpcode::NotAccepted:
      return "not a request";
  }
  return "unknown opcode";
}

std::uint32_t next_anchor(std::uint32_t clk) {
  const std::uint32_t slot = (clk & kClockMask) >> 1;
  const std::uint32_t next_even = (slot + 2) & ~1u;
  return (next_even << 1) & kClockMask;
}

ModeTimers timers_for(const LmpPdu& request, std::uint32_t anchor) {
  ModeTimers t;
  switch (request.opcode) {
    case LmpOpcode::SniffReq:
      t.mode = LinkMode::Sniff;
      t.sniff_anchor = anchor;
      t.t_sniff = request.interval;
      t.sniff_attempt = request.attempt;
      break;
    case LmpOpcode::HoldReq:
      t.mode = LinkMode::Hold;
      t.hold_until = (anchor + 2 * request.interval) & kClockMask;
      break;
    case LmpOpcode::ParkReq:
      t.mode = LinkMode::Park;
      break;
    default:
      break;
  }
  return t;
}

bool sniff_window_open(const ModeTimers& timers, std::uint32_t clk) {
  if (timers.t_sniff == 0) return false;
  const std::uint32_t elapsed = (clk - timers.sniff_anchor) & kClockMask;
  // Clocks just before the anchor appear as huge elapsed values.
  if (elapsed >= (1u << 27)) return false;
  return (elapsed >> 1) % timers.t_sniff < timers.sniff_attempt;
}

bool clk_reached(std::uint32_t clk, std::uint32_t target) {
  return ((clk - target) & kClockMask) < (1u << 27);
}

}  // namespace btsim
