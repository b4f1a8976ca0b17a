// Bit-exact baseband packet construction and parsing.
//
// Bit order on air: access code first; every multi-bit field is sent LSB
// first. Air frames are vectors of 0/1 bytes; received frames are vectors of
// AirSymbol so that idle (Z) and collided (X) ticks survive into the parser.
#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "btsim/air_symbol.hpp"

namespace btsim {

using Bits = std::vector<std::uint8_t>;

inline constexpr int kSlotUs = 625;
inline constexpr int kTurnaroundGuardUs = 259;
inline constexpr int kIdBits = 68;
inline constexpr int kAccessBits = 72;
inline constexpr int kHeaderAirBits = 54;
inline constexpr int kHeaderPlainBits = 18;
inline constexpr int kDefaultSyncThreshold = 11;

inline constexpr std::uint32_t kGiacLap = 0x9E8B33;
inline constexpr std::uint32_t kDiacLapBase = 0x9E8B00;

class MalformedFrame : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class CapacityError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct BdAddr {
  std::uint32_t lap = 0;  // 24 bits
  std::uint8_t uap = 0;
  std::uint16_t nap = 0;

  bool valid() const { return lap < (1u << 24); }
  // LAP plus the four low UAP bits; keys the hop kernel.
  std::uint32_t address_key() const { return lap | (std::uint32_t(uap & 0x0F) << 24); }
  std::uint64_t as_u64() const {
    return std::uint64_t(lap) | (std::uint64_t(uap) << 24) | (std::uint64_t(nap) << 32);
  }
  static BdAddr from_u64(std::uint64_t v) {
    return {std::uint32_t(v & 0xFFFFFF), std::uint8_t((v >> 24) & 0xFF),
            std::uint16_t((v >> 32) & 0xFFFF)};
  }
  // "NNNN:UU:LLLLLL" in hex.
  std::string to_string() const;
  static std::optional<BdAddr> parse(const std::string& text);

  auto operator<=>(const BdAddr&) const = default;
};

enum class AccessKind : std::uint8_t { Giac, Diac, ChannelAccess, DeviceAccess };

// Deterministic 64-bit expansion of a LAP standing in for the BCH sync word
// construction. Version 1; changing it changes every trace.
std::uint64_t expand_sync_word(std::uint32_t lap);

struct AccessCode {
  AccessKind kind = AccessKind::Giac;
  std::uint32_t lap = kGiacLap;

  static AccessCode giac() { return {AccessKind::Giac, kGiacLap}; }
  static AccessCode diac(int index) { return {AccessKind::Diac, kDiacLapBase + std::uint32_t(index & 0x3F)}; }
  static AccessCode channel(const BdAddr& master) { return {AccessKind::ChannelAccess, master.lap}; }
  static AccessCode device(const BdAddr& slave) { return {AccessKind::DeviceAccess, slave.lap}; }

  std::uint64_t sync_word() const { return expand_sync_word(lap); }
  // 68 bits (preamble + sync word), plus the 4-bit trailer when requested.
  Bits bits(bool with_trailer) const;

  bool operator==(const AccessCode&) const = default;
};

enum class PacketKind : std::uint8_t { Id, Fhs, Poll, Null, Dm1, Dm3, Dm5, Dh1, Dh3, Dh5 };
enum class FecKind : std::uint8_t { None, Rate23 };

struct KindTraits {
  const char* name;
  int slots;
  FecKind fec;
  int type_code;        // -1 for ID
  int payload_header;   // bits: 0, 8 or 16
  int capacity;         // user payload bytes
};

const KindTraits& traits(PacketKind kind);
std::optional<PacketKind> kind_from_type_code(int code);
std::optional<PacketKind> kind_from_name(const std::string& name);
inline const char* to_string(PacketKind k) { return traits(k).name; }
bool is_data_kind(PacketKind kind);

int capacity(PacketKind kind);

inline constexpr int kFhsPayloadBytes = 10;

// FHS payload: BdAddr (48), CLK bits 27..2 (26), am_addr (3), 3 spare bits.
struct FhsInfo {
  BdAddr addr;
  std::uint32_t clk27_2 = 0;
  std::uint8_t am_addr = 0;

  bool operator==(const FhsInfo&) const = default;
};
std::vector<std::uint8_t> encode_fhs(const FhsInfo& info);
FhsInfo decode_fhs(std::span<const std::uint8_t> payload);

struct PacketHeader {
  std::uint8_t am_addr = 0;  // 0 = broadcast
  bool flow = true;
  bool arqn = false;
  bool seqn = false;

  bool operator==(const PacketHeader&) const = default;
};

struct Packet {
  PacketKind kind = PacketKind::Id;
  AccessCode access;
  std::optional<PacketHeader> header;
  std::uint8_t llid = 2;  // payload header logical channel (3 = LMP)
  std::vector<std::uint8_t> payload;

  bool operator==(const Packet&) const = default;
};

// Rate-1/3 repetition code.
Bits fec13_encode(std::span<const std::uint8_t> bits);
Bits fec13_decode(std::span<const std::uint8_t> bits);

// (15,10) shortened Hamming code, generator D^5 + D^4 + D^2 + 1.
std::uint16_t fec23_encode(std::uint16_t data10);
struct Fec23Decoded {
  std::uint16_t data = 0;
  int corrected = 0;
};
Fec23Decoded fec23_decode(std::uint16_t code15);

// Block-wise helpers; input padded with zeros to a multiple of 10.
Bits fec23_encode_bits(std::span<const std::uint8_t> bits);
Bits fec23_decode_bits(std::span<const std::uint8_t> bits, int* corrected = nullptr);

std::uint8_t hec8(std::uint16_t header10, std::uint8_t uap);
std::uint16_t crc16_bits(std::span<const std::uint8_t> bits, std::uint8_t uap);
std::uint16_t crc16(std::span<const std::uint8_t> bytes, std::uint8_t uap);

// Number of bits a packet occupies on air.
int air_bits(const Packet& packet);

Bits build_packet(const Packet& packet, std::uint8_t uap);

enum class ParseStatus : std::uint8_t { Ok, AccessMiss, HeaderError, PayloadError };
const char* to_string(ParseStatus s);

struct ParseResult {
  ParseStatus status = ParseStatus::AccessMiss;
  Packet packet;
  int access_distance = -1;  // -1 when the window held an X
  int corrected_bits = 0;

  bool ok() const { return status == ParseStatus::Ok; }
};

// Hamming distance of the first 68 symbols against the expected code; Z counts
// as a mismatch. Returns -1 if any symbol is X or fewer than 68 are given.
int access_distance(std::span<const AirSymbol> window, const AccessCode& expected);

ParseResult parse_packet(std::span<const AirSymbol> air, const AccessCode& expected,
                         std::uint8_t uap, int sync_threshold = kDefaultSyncThreshold);

// Bit helpers shared with the link manager.
void append_bits(Bits& out, std::uint64_t value, int count);
std::uint64_t read_bits(std::span<const std::uint8_t> bits, std::size_t offset, int count);
Bits bytes_to_bits(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> bits_to_bytes(std::span<const std::uint8_t> bits);

}  // namespace btsim
