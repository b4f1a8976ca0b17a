#include "btsim/airframe.hpp"

#include <array>
#include <cstdio>

#include "btsim/rng.hpp"

namespace btsim {

namespace {

constexpr std::array<KindTraits, 10> kTraits = {{
    {"ID", 1, FecKind::None, -1, 0, 0},
    {"FHS", 1, FecKind::Rate23, 0b0010, 0, kFhsPayloadBytes},
    {"POLL", 1, FecKind::None, 0b0001, 0, 0},
    {"NULL", 1, FecKind::None, 0b0000, 0, 0},
    {"DM1", 1, FecKind::Rate23, 0b0011, 8, 17},
    {"DM3", 3, FecKind::Rate23, 0b1010, 16, 121},
    {"DM5", 5, FecKind::Rate23, 0b1110, 16, 224},
    {"DH1", 1, FecKind::None, 0b0100, 8, 27},
    {"DH3", 3, FecKind::None, 0b1011, 16, 183},
    {"DH5", 5, FecKind::None, 0b1111, 16, 339},
}};

constexpr std::uint8_t kFec23Poly = 0x15;   // D^4 + D^2 + 1 (leading D^5 implied)
constexpr std::uint8_t kHecPoly = 0xA7;     // D^7 + D^5 + D^2 + D + 1 (leading D^8 implied)
constexpr std::uint16_t kCrcPoly = 0x1021;  // D^12 + D^5 + 1 (leading D^16 implied)

std::uint8_t fec23_remainder(std::uint16_t bits, int count) {
  std::uint8_t reg = 0;
  for (int i = 0; i < count; ++i) {
    const std::uint8_t fb = ((bits >> i) & 1u) ^ ((reg >> 4) & 1u);
    reg = std::uint8_t((reg << 1) & 0x1F);
    if (fb) reg ^= kFec23Poly;
  }
  return reg;
}

struct SyndromeTable {
  std::array<std::int8_t, 32> position{};
  SyndromeTable() {
    position.fill(-1);
    for (int p = 0; p < 15; ++p) position[fec23_remainder(std::uint16_t(1u << p), 15)] = std::int8_t(p);
  }
};

const SyndromeTable& syndrome_table() {
  static const SyndromeTable table;
  return table;
}

}  // namespace

std::string BdAddr::to_string() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04X:%02X:%06X", nap, uap, lap);
  return buf;
}

std::optional<BdAddr> BdAddr::parse(const std::string& text) {
  unsigned nap = 0, uap = 0, lap = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%4x:%2x:%6x%c", &nap, &uap, &lap, &tail) != 3) return std::nullopt;
  if (text.size() != 14) return std::nullopt;
  return BdAddr{lap, std::uint8_t(uap), std::uint16_t(nap)};
}

std::uint64_t expand_sync_word(std::uint32_t lap) {
  return splitmix64(0xB7E1'5162'8AED'2A6Bull ^ (std::uint64_t(lap & 0xFFFFFF) << 8) ^ 0x01);
}

Bits AccessCode::bits(bool with_trailer) const {
  const std::uint64_t sync = sync_word();
  Bits out;
  out.reserve(kAccessBits);
  const std::uint8_t first = sync & 1u;
  // Preamble alternates and ends opposite to the first sync bit.
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((i % 2 == 0) ? first : !first));
  append_bits(out, sync, 64);
  if (with_trailer) {
    const std::uint8_t last = (sync >> 63) & 1u;
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((i % 2 == 0) ? !last : last));
  }
  return out;
}

const KindTraits& traits(PacketKind kind) { return kTraits[static_cast<std::size_t>(kind)]; }

std::optional<PacketKind> kind_from_type_code(int code) {
  for (std::size_t i = 1; i < kTraits.size(); ++i)
    if (kTraits[i].type_code == code) return static_cast<PacketKind>(i);
  return std::nullopt;
}

std::optional<PacketKind> kind_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kTraits.size(); ++i)
    if (name == kTraits[i].name) return static_cast<PacketKind>(i);
  return std::nullopt;
}

bool is_data_kind(PacketKind kind) { return traits(kind).payload_header != 0; }

int capacity(PacketKind kind) { return traits(kind).capacity; }

void append_bits(Bits& out, std::uint64_t value, int count) {
  for (int i = 0; i < count; ++i) out.push_back(std::uint8_t((value >> i) & 1u));
}

std::uint64_t read_bits(std::span<const std::uint8_t> bits, std::size_t offset, int count) {
  std::uint64_t v = 0;
  for (int i = 0; i < count; ++i) v |= std::uint64_t(bits[offset + i] & 1u) << i;
  return v;
}

Bits bytes_to_bits(std::span<const std::uint8_t> bytes) {
  Bits out;
  out.reserve(bytes.size() * 8);
  for (auto b : bytes) append_bits(out, b, 8);
  return out;
}

std::vector<std::uint8_t> bits_to_bytes(std::span<const std::uint8_t> bits) {
  std::vector<std::uint8_t> out(bits.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::uint8_t(read_bits(bits, i * 8, 8));
  return out;
}

Bits fec13_encode(std::span<const std::uint8_t> bits) {
  Bits out;
  out.reserve(bits.size() * 3);
  for (auto b : bits) out.insert(out.end(), 3, std::uint8_t(b & 1u));
  return out;
}

Bits fec13_decode(std::span<const std::uint8_t> bits) {
  if (bits.size() % 3 != 0) throw MalformedFrame("rate-1/3 input length is not a multiple of 3");
  Bits out;
  out.reserve(bits.size() / 3);
  for (std::size_t i = 0; i < bits.size(); i += 3)
    out.push_back(std::uint8_t((bits[i] + bits[i + 1] + bits[i + 2]) >= 2));
  return out;
}

std::uint16_t fec23_encode(std::uint16_t data10) {
  data10 &= 0x3FF;
  const std::uint8_t parity = fec23_remainder(data10, 10);
  // Register is shifted out MSB first after the data bits.
  std::uint16_t parity_bits = 0;
  for (int i = 0; i < 5; ++i) parity_bits |= std::uint16_t(((parity >> (4 - i)) & 1u) << i);
  return std::uint16_t(data10 | (parity_bits << 10));
}

Fec23Decoded fec23_decode(std::uint16_t code15) {
  code15 &= 0x7FFF;
  const std::uint8_t syndrome = fec23_remainder(code15, 15);
  if (syndrome == 0) return {std::uint16_t(code15 & 0x3FF), 0};
  const int pos = syndrome_table().position[syndrome];
  if (pos < 0) return {std::uint16_t(code15 & 0x3FF), 0};
  return {std::uint16_t((code15 ^ (1u << pos)) & 0x3FF), 1};
}

Bits fec23_encode_bits(std::span<const std::uint8_t> bits) {
  Bits out;
  out.reserve((bits.size() + 9) / 10 * 15);
  for (std::size_t i = 0; i < bits.size(); i += 10) {
    std::uint16_t block = 0;
    for (std::size_t j = 0; j < 10 && i + j < bits.size(); ++j) block |= std::uint16_t((bits[i + j] & 1u) << j);
    append_bits(out, fec23_encode(block), 15);
  }
  return out;
}

Bits fec23_decode_bits(std::span<const std::uint8_t> bits, int* corrected) {
  Bits out;
  out.reserve(bits.size() / 15 * 10);
  int fixed = 0;
  for (std::size_t i = 0; i + 15 <= bits.size(); i += 15) {
    const auto d = fec23_decode(std::uint16_t(read_bits(bits, i, 15)));
    fixed += d.corrected;
    append_bits(out, d.data, 10);
  }
  if (corrected) *corrected = fixed;
  return out;
}

std::uint8_t hec8(std::uint16_t header10, std::uint8_t uap) {
  std::uint8_t reg = uap;
  for (int i = 0; i < 10; ++i) {
    const std::uint8_t fb = ((header10 >> i) & 1u) ^ ((reg >> 7) & 1u);
    reg = std::uint8_t(reg << 1);
    if (fb) reg ^= kHecPoly;
  }
  return reg;
}

std::uint16_t crc16_bits(std::span<const std::uint8_t> bits, std::uint8_t uap) {
  std::uint16_t reg = uap;
  for (auto b : bits) {
    const std::uint16_t fb = (b & 1u) ^ ((reg >> 15) & 1u);
    reg = std::uint16_t(reg << 1);
    if (fb) reg ^= kCrcPoly;
  }
  return reg;
}

std::uint16_t crc16(std::span<const std::uint8_t> bytes, std::uint8_t uap) {
  const Bits bits = bytes_to_bits(bytes);
  return crc16_bits(bits, uap);
}

namespace {

// Payload header + payload + CRC, before FEC.
Bits payload_plain_bits(const Packet& p, std::uint8_t uap) {
  const auto& t = traits(p.kind);
  Bits plain;
  if (t.payload_header == 8) {
    append_bits(plain, p.llid & 3u, 2);
    append_bits(plain, 1, 1);
    append_bits(plain, p.payload.size(), 5);
  } else if (t.payload_header == 16) {
    append_bits(plain, p.llid & 3u, 2);
    append_bits(plain, 1, 1);
    append_bits(plain, p.payload.size(), 9);
    append_bits(plain, 0, 4);
  }
  const Bits body = bytes_to_bits(p.payload);
  plain.insert(plain.end(), body.begin(), body.end());
  append_bits(plain, crc16_bits(plain, uap), 16);
  return plain;
}

int coded_payload_bits(PacketKind kind, std::size_t payload_bytes) {
  const auto& t = traits(kind);
  if (kind == PacketKind::Id || kind == PacketKind::Poll || kind == PacketKind::Null) return 0;
  const int plain = t.payload_header + int(payload_bytes) * 8 + 16;
  return t.fec == FecKind::Rate23 ? (plain + 9) / 10 * 15 : plain;
}

}  // namespace

int air_bits(const Packet& packet) {
  if (packet.kind == PacketKind::Id) return kIdBits;
  return kAccessBits + kHeaderAirBits + coded_payload_bits(packet.kind, packet.payload.size());
}

Bits build_packet(const Packet& p, std::uint8_t uap) {
  const auto& t = traits(p.kind);
  if (p.kind == PacketKind::Id) {
    if (!p.payload.empty() || p.header) throw CapacityError("ID packets carry no header or payload");
    return p.access.bits(false);
  }
  if (p.kind == PacketKind::Fhs) {
    if (p.payload.size() != std::size_t(kFhsPayloadBytes))
      throw CapacityError("FHS payload must be exactly 10 bytes");
  } else if (int(p.payload.size()) > t.capacity) {
    throw CapacityError(std::string(t.name) + " payload of " + std::to_string(p.payload.size()) +
                        " bytes exceeds capacity " + std::to_string(t.capacity));
  }

  Bits out = p.access.bits(true);
  const PacketHeader h = p.header.value_or(PacketHeader{});
  Bits header;
  append_bits(header, h.am_addr & 7u, 3);
  append_bits(header, std::uint64_t(t.type_code), 4);
  append_bits(header, h.flow, 1);
  append_bits(header, h.arqn, 1);
  append_bits(header, h.seqn, 1);
  const auto header10 = std::uint16_t(read_bits(header, 0, 10));
  append_bits(header, hec8(header10, uap), 8);
  const Bits coded_header = fec13_encode(header);
  out.insert(out.end(), coded_header.begin(), coded_header.end());

  if (p.kind == PacketKind::Poll || p.kind == PacketKind::Null) return out;
  const Bits plain = payload_plain_bits(p, uap);
  if (t.fec == FecKind::Rate23) {
    const Bits coded = fec23_encode_bits(plain);
    out.insert(out.end(), coded.begin(), coded.end());
  } else {
    out.insert(out.end(), plain.begin(), plain.end());
  }
  return out;
}

const char* to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::Ok: return "ok";
    case ParseStatus::AccessMiss: return "access-miss";
    case ParseStatus::HeaderError: return "header-error";
    case ParseStatus::PayloadError: return "payload-error";
  }
  return "?";
}

int access_distance(std::span<const AirSymbol> window, const AccessCode& expected) {
  if (window.size() < std::size_t(kIdBits)) return -1;
  const Bits code = expected.bits(false);
  int distance = 0;
  for (int i = 0; i < kIdBits; ++i) {
    const AirSymbol s = window[i];
    if (s == AirSymbol::X) return -1;
    if (s == AirSymbol::Z || std::uint8_t(s) != code[i]) ++distance;
  }
  return distance;
}

ParseResult parse_packet(std::span<const AirSymbol> air, const AccessCode& expected, std::uint8_t uap,
                         int sync_threshold) {
  ParseResult r;
  r.access_distance = access_distance(air, expected);
  if (r.access_distance < 0 || r.access_distance > sync_threshold) {
    r.status = ParseStatus::AccessMiss;
    return r;
  }
  r.packet.access = expected;
  if (air.size() < std::size_t(kAccessBits + kHeaderAirBits)) {
    r.packet.kind = PacketKind::Id;
    r.status = ParseStatus::Ok;
    return r;
  }

  Bits coded_header(kHeaderAirBits);
  for (int i = 0; i < kHeaderAirBits; ++i) {
    const AirSymbol s = air[kAccessBits + i];
    if (!is_bit(s)) {
      r.status = ParseStatus::HeaderError;
      return r;
    }
    coded_header[i] = std::uint8_t(s);
  }
  const Bits header = fec13_decode(coded_header);
  const auto header10 = std::uint16_t(read_bits(header, 0, 10));
  if (hec8(header10, uap) != read_bits(header, 10, 8)) {
    r.status = ParseStatus::HeaderError;
    return r;
  }
  const auto kind = kind_from_type_code(int(read_bits(header, 3, 4)));
  if (!kind) {
    r.status = ParseStatus::HeaderError;
    return r;
  }
  r.packet.kind = *kind;
  r.packet.header = PacketHeader{std::uint8_t(read_bits(header, 0, 3)), header[7] != 0, header[8] != 0,
                                 header[9] != 0};
  if (*kind == PacketKind::Poll || *kind == PacketKind::Null) {
    r.status = ParseStatus::Ok;
    return r;
  }

  const std::size_t start = kAccessBits + kHeaderAirBits;
  Bits body;
  body.reserve(air.size() - start);
  for (std::size_t i = start; i < air.size(); ++i) {
    if (!is_bit(air[i])) break;
    body.push_back(std::uint8_t(air[i]));
  }
  const auto& t = traits(*kind);
  Bits plain = t.fec == FecKind::Rate23 ? fec23_decode_bits(body, &r.corrected_bits) : body;

  std::size_t payload_bits = 0;
  std::size_t offset = 0;
  if (*kind == PacketKind::Fhs) {
    payload_bits = std::size_t(kFhsPayloadBytes) * 8;
  } else {
    if (plain.size() < std::size_t(t.payload_header)) {
      r.status = ParseStatus::PayloadError;
      return r;
    }
    r.packet.llid = std::uint8_t(read_bits(plain, 0, 2));
    const int length_bits = t.payload_header == 8 ? 5 : 9;
    const auto length = std::size_t(read_bits(plain, 3, length_bits));
    if (int(length) > t.capacity) {
      r.status = ParseStatus::PayloadError;
      return r;
    }
    payload_bits = length * 8;
    offset = std::size_t(t.payload_header);
  }
  const std::size_t covered = offset + payload_bits;
  if (plain.size() < covered + 16) {
    r.status = ParseStatus::PayloadError;
    return r;
  }
  const std::span<const std::uint8_t> plain_span(plain);
  if (crc16_bits(plain_span.first(covered), uap) != read_bits(plain, covered, 16)) {
    r.status = ParseStatus::PayloadError;
    return r;
  }
  r.packet.payload = bits_to_bytes(plain_span.subspan(offset, payload_bits));
  r.status = ParseStatus::Ok;
  return r;
}

std::vector<std::uint8_t> encode_fhs(const FhsInfo& info) {
  Bits bits;
  append_bits(bits, info.addr.as_u64(), 48);
  append_bits(bits, info.clk27_2 & ((1u << 26) - 1), 26);
  append_bits(bits, info.am_addr & 7u, 3);
  append_bits(bits, 0, 3);
  return bits_to_bytes(bits);
}

FhsInfo decode_fhs(std::span<const std::uint8_t> payload) {
  if (payload.size() != std::size_t(kFhsPayloadBytes)) throw MalformedFrame("FHS payload must be 10 bytes");
  const Bits bits = bytes_to_bits(payload);
  FhsInfo info;
  info.addr = BdAddr::from_u64(read_bits(bits, 0, 48));
  info.clk27_2 = std::uint32_t(read_bits(bits, 48, 26));
  info.am_addr = std::uint8_t(read_bits(bits, 74, 3));
  return info;
}

}  // namespace btsim
