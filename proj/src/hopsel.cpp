#include "btsim/hopsel.hpp"

#include <numeric>

#include "btsim/rng.hpp"

namespace btsim {

namespace {

struct MixStream {
  std::uint64_t state;
  std::uint64_t next() { return splitmix64(state += 0x9E3779B97F4A7C15ull); }
  int below(int n) { return int(next() % std::uint64_t(n)); }
};

std::uint64_t salt_of(HopSetKind kind) {
  switch (kind) {
    case HopSetKind::Inquiry: return 0x1A;
    case HopSetKind::InquiryResponse: return 0x2B;
    case HopSetKind::Page: return 0x3C;
    case HopSetKind::PageResponse: return 0x4D;
  }
  return 0;
}

using Perm = std::array<std::uint8_t, kNumHopChannels>;

Perm raw_block(std::uint32_t key, std::uint32_t block) {
  Perm p;
  std::iota(p.begin(), p.end(), std::uint8_t(0));
  MixStream s{splitmix64((std::uint64_t(key) << 32) ^ block ^ 0xC0FFEE5EEDull)};
  for (int i = kNumHopChannels - 1; i > 0; --i) std::swap(p[std::size_t(i)], p[std::size_t(s.below(i + 1))]);
  return p;
}

// Blocks are adjusted so the first hop of a block differs from the last hop
// of the previous one.
Perm block_perm(std::uint32_t key, std::uint32_t block, std::uint32_t nblocks) {
  Perm p = raw_block(key, block);
  const Perm prev = raw_block(key, (block + nblocks - 1) % nblocks);
  if (p[0] == prev[kNumHopChannels - 1]) std::swap(p[0], p[1]);
  return p;
}

}  // namespace

std::array<std::uint8_t, kHopSetSize> hop_set(HopSetKind kind, std::uint32_t address_key) {
  Perm p;
  std::iota(p.begin(), p.end(), std::uint8_t(0));
  MixStream s{splitmix64((std::uint64_t(address_key) << 8) ^ salt_of(kind))};
  std::array<std::uint8_t, kHopSetSize> out{};
  for (int i = 0; i < kHopSetSize; ++i) {
    const int j = i + s.below(kNumHopChannels - i);
    std::swap(p[std::size_t(i)], p[std::size_t(j)]);
    out[std::size_t(i)] = p[std::size_t(i)];
  }
  return out;
}

std::uint32_t inquiry_key() { return AccessCode::giac().lap & 0xFFFFFF; }

Train train_schedule(std::uint32_t elapsed_clk, int train_repetitions, bool cold) {
  const std::uint32_t rep = elapsed_clk / kClkPerRepetition;
  if (cold) return rep % 2 == 0 ? Train::A : Train::B;
  return (rep / std::uint32_t(train_repetitions)) % 2 == 0 ? Train::A : Train::B;
}

int train_position(std::uint32_t clk) { return int(((clk >> 2) & 7) * 2 + (clk & 1)); }

int train_index(const HopContext& ctx) {
  const std::uint32_t clk = ctx.clock.clk();
  const std::uint32_t elapsed = (clk - ctx.train_origin) & kClockMask;
  const int train = train_schedule(elapsed, ctx.train_repetitions, ctx.cold) == Train::A ? 0 : 1;
  const int pos = train_position(clk);
  if (ctx.mode == HopMode::Inquiry) return pos + kTrainSize * train;
  return ((ctx.x_est - kTrainSize / 2 + pos + kTrainSize * train) % kHopSetSize + kHopSetSize) % kHopSetSize;
}

int scan_index(std::uint32_t address_key, std::uint32_t clkn) {
  const std::uint32_t offset = std::uint32_t(splitmix64(address_key ^ 0x5CA7ull) % kHopSetSize);
  return int(((clkn >> 12) + offset) % kHopSetSize);
}

int scan_channel(HopMode mode, std::uint32_t address_key, std::uint32_t clkn) {
  const auto kind = mode == HopMode::InquiryScan || mode == HopMode::Inquiry ? HopSetKind::Inquiry
                                                                              : HopSetKind::Page;
  return hop_set(kind, address_key)[std::size_t(scan_index(address_key, clkn))];
}

int connection_channel(std::uint32_t address_key, std::uint32_t clk) {
  // 2^27 slots do not split evenly into 79-slot blocks; the last partial
  // block wraps with the clock.
  constexpr std::uint32_t kSlots = 1u << 27;
  constexpr std::uint32_t kBlocks = (kSlots + kNumHopChannels - 1) / kNumHopChannels;
  const std::uint32_t slot = (clk & kClockMask) >> 1;
  const std::uint32_t block = slot / kNumHopChannels;
  thread_local std::uint32_t cached_key = 0, cached_block = UINT32_MAX;
  thread_local Perm cached{};
  if (cached_key != address_key || cached_block != block) {
    cached = block_perm(address_key, block, kBlocks);
    cached_key = address_key;
    cached_block = block;
  }
  return cached[slot % kNumHopChannels];
}

int hop(const HopContext& ctx) {
  switch (ctx.mode) {
    case HopMode::Inquiry:
      return hop_set(HopSetKind::Inquiry, ctx.address_key)[std::size_t(train_index(ctx))];
    case HopMode::Page:
      return hop_set(HopSetKind::Page, ctx.address_key)[std::size_t(train_index(ctx))];
    case HopMode::InquiryScan:
    case HopMode::PageScan:
      return scan_channel(ctx.mode, ctx.address_key, ctx.clock.clkn);
    case HopMode::Connection:
      return connection_channel(ctx.address_key, ctx.clock.clk());
  }
  return 0;
}

}  // namespace btsim
