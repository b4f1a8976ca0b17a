// Frequency-hop selection: inquiry/page trains, scan channels and the
// connection-state sequence.
//
// The hop kernel is a keyed pseudo-random mix, not the bit-exact kernel of
// real radios. It is fixed and versioned through kHopKernelId.
#pragma once

#include <array>
#include <cstdint>

#include "btsim/airframe.hpp"

namespace btsim {

inline constexpr const char* kHopKernelId = "keyed-mix-v1";
inline constexpr std::uint32_t kClockMask = (1u << 28) - 1;
inline constexpr int kNumHopChannels = 79;
inline constexpr int kTrainSize = 16;
inline constexpr int kHopSetSize = 32;
inline constexpr int kDefaultTrainRepetitions = 256;
// CLK ticks per train repetition: 16 slots of 2 ticks each.
inline constexpr std::uint32_t kClkPerRepetition = 2 * kTrainSize;

// Native clock plus the offset that turns it into CLKE/CLK.
struct BtClock {
  std::uint32_t clkn = 0;
  std::int64_t offset = 0;

  std::uint32_t clk() const {
    return std::uint32_t((std::int64_t(clkn) + offset) & kClockMask);
  }
};

enum class HopMode { Inquiry, InquiryScan, Page, PageScan, Connection };
enum class HopSetKind { Inquiry, InquiryResponse, Page, PageResponse };
enum class Train { A, B };

struct HopContext {
  HopMode mode = HopMode::Connection;
  std::uint32_t address_key = 0;
  BtClock clock;
  // Inquiry/Page only: CLK at procedure start (trains are counted from here),
  // the estimated scan index of the target and whether the estimate is absent.
  std::uint32_t train_origin = 0;
  int x_est = 0;
  bool cold = false;
  int train_repetitions = kDefaultTrainRepetitions;
};

// 32 distinct channels of [0, 79), keyed by address.
std::array<std::uint8_t, kHopSetSize> hop_set(HopSetKind kind, std::uint32_t address_key);

// Key used for inquiry and inquiry scan.
std::uint32_t inquiry_key();

// Train used at elapsed CLK ticks since the procedure started.
Train train_schedule(std::uint32_t elapsed_clk, int train_repetitions = kDefaultTrainRepetitions,
                     bool cold = false);
// Position 0..15 within the train for a transmit half-slot.
int train_position(std::uint32_t clk);
// Hop set index 0..31 an Inquiry/Page device uses at clk.
int train_index(const HopContext& ctx);

// Scan index X, stepping every 1.28 s (CLKN bit 12).
int scan_index(std::uint32_t address_key, std::uint32_t clkn);
int scan_channel(HopMode mode, std::uint32_t address_key, std::uint32_t clkn);

int connection_channel(std::uint32_t address_key, std::uint32_t clk);

// Inquiry/Page: channel of the train index; scans: scan channel at the
// native clock; Connection: the piconet sequence at CLK.
int hop(const HopContext& ctx);

}  // namespace btsim
