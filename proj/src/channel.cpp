#include "btsim/channel.hpp"

namespace btsim {

void ChannelParams::validate() const {
  if (!(ber >= 0.0 && ber <= 1.0)) throw std::invalid_argument("channel.ber: must lie in [0, 1]");
  if (rf_delay_us < 0 || rf_delay_us >= 625)
    throw std::invalid_argument("channel.rf_delay_us: must lie in [0, 625)");
}

AirSymbol apply_noise(AirSymbol sym, double ber, Rng& rng) {
  if (!is_bit(sym) || ber <= 0.0) return sym;
  if (rng.bernoulli(ber)) return sym == AirSymbol::One ? AirSymbol::Zero : AirSymbol::One;
  return sym;
}

ChannelMap resolve(std::span<const Transmission> outputs, double ber, Rng& rng) {
  ChannelMap map;
  map.fill(AirSymbol::Z);
  std::array<std::uint8_t, kNumRfChannels> count{};
  for (const auto& o : outputs) {
    if (o.symbol == AirSymbol::Z) continue;
    auto& c = count[std::size_t(o.rf_channel)];
    map[std::size_t(o.rf_channel)] = ++c == 1 ? o.symbol : AirSymbol::X;
  }
  for (auto& s : map) s = apply_noise(s, ber, rng);
  return map;
}

Channel::Channel(const ChannelParams& params, std::uint64_t seed)
    : params_(params), rng_(seed), ring_(std::size_t(params.rf_delay_us) + 1), touched_(ring_.size()) {
  params_.validate();
  for (auto& m : ring_) m.fill(AirSymbol::Z);
}

void Channel::step(std::span<const Transmission> outputs) {
  auto& map = ring_[write_index_];
  auto& touched = touched_[write_index_];
  for (auto ch : touched) map[ch] = AirSymbol::Z;
  touched.clear();
  for (const auto& o : outputs) {
    if (o.symbol == AirSymbol::Z) continue;
    const auto ch = std::size_t(o.rf_channel);
    if (map[ch] == AirSymbol::Z) {
      map[ch] = o.symbol;
      touched.push_back(std::uint8_t(ch));
    } else {
      map[ch] = AirSymbol::X;
    }
  }
  if (params_.ber > 0.0) {
    for (auto ch : touched) {
      const AirSymbol before = map[ch];
      map[ch] = apply_noise(before, params_.ber, rng_);
      flips_ += map[ch] != before;
    }
  }
  read_index_ = write_index_;
  write_index_ = (write_index_ + 1) % ring_.size();
  if (ring_.size() > 1) read_index_ = write_index_;
}

}  // namespace btsim
