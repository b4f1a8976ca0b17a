#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace btsim {

// One channel symbol per 1 us tick.
enum class AirSymbol : std::uint8_t { Zero = 0, One = 1, Z = 2, X = 3 };

inline bool is_bit(AirSymbol s) { return s == AirSymbol::Zero || s == AirSymbol::One; }
inline AirSymbol bit_symbol(std::uint8_t b) { return b ? AirSymbol::One : AirSymbol::Zero; }
inline char symbol_char(AirSymbol s) {
  switch (s) {
    case AirSymbol::Zero: return '0';
    case AirSymbol::One: return '1';
    case AirSymbol::Z: return 'z';
    case AirSymbol::X: return 'x';
  }
  return '?';
}

inline std::vector<AirSymbol> to_air(std::span<const std::uint8_t> bits) {
  std::vector<AirSymbol> out;
  out.reserve(bits.size());
  for (auto b : bits) out.push_back(bit_symbol(b));
  return out;
}

}  // namespace btsim
