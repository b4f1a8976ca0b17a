// Shared broadcast medium: per-channel tri-state resolution, bit inversion
// noise and modulator/demodulator delay.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "btsim/air_symbol.hpp"
#include "btsim/rng.hpp"

namespace btsim {

inline constexpr int kNumRfChannels = 79;

struct ChannelParams {
  double ber = 0.0;
  int rf_delay_us = 0;
  std::string rng_stream = "channel";

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct Transmission {
  int device = 0;
  int rf_channel = 0;
  AirSymbol symbol = AirSymbol::Z;
};

using ChannelMap = std::array<AirSymbol, kNumRfChannels>;

AirSymbol apply_noise(AirSymbol sym, double ber, Rng& rng);

// Resolves one tick. Channels without a transmitter read Z, a single
// transmitter's symbol passes through the noise process, two or more read X.
ChannelMap resolve(std::span<const Transmission> outputs, double ber, Rng& rng);

class Channel {
public:
  Channel(const ChannelParams& params, std::uint64_t seed);

  // Resolves the outputs of the current tick and advances the delay line.
  void step(std::span<const Transmission> outputs);
  // Symbol a receiver tuned to rf_channel observes at the current tick, i.e.
  // the resolved symbol of tick (now - rf_delay_us); Z before the first tick.
  AirSymbol observe(int rf_channel) const { return ring_[read_index_][std::size_t(rf_channel)]; }

  const ChannelParams& params() const { return params_; }
  const Rng& rng() const { return rng_; }
  std::uint64_t flips() const { return flips_; }

private:
  ChannelParams params_;
  Rng rng_;
  std::vector<ChannelMap> ring_;
  std::vector<std::vector<std::uint8_t>> touched_;
  std::size_t write_index_ = 0;
  std::size_t read_index_ = 0;
  std::uint64_t flips_ = 0;
};

}  // namespace btsim
