#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "btsim/hopsel.hpp"

using namespace btsim;

namespace {

const std::uint32_t kMasterKey = BdAddr{0x1A2B3C, 0x5D, 1}.address_key();
const std::uint32_t kSlaveKey = BdAddr{0x4D5E6F, 0x21, 2}.address_key();

HopContext ctx(HopMode mode, std::uint32_t key, std::uint32_t clkn, std::int64_t offset = 0) {
  HopContext c;
  c.mode = mode;
  c.address_key = key;
  c.clock = BtClock{clkn, offset};
  return c;
}

}  // namespace

TEST_CASE("every mode returns a channel in range") {
  std::mt19937_64 g(1);
  for (HopMode m : {HopMode::Inquiry, HopMode::InquiryScan, HopMode::Page, HopMode::PageScan, HopMode::Connection}) {
    for (int i = 0; i < 20000; ++i) {
      HopContext c = ctx(m, std::uint32_t(g()) & 0x0FFFFFFF, std::uint32_t(g()) & kClockMask);
      c.train_origin = std::uint32_t(g()) & kClockMask;
      c.x_est = int(g() % 32);
      const int ch = hop(c);
      REQUIRE(ch >= 0);
      REQUIRE(ch < kNumHopChannels);
    }
  }
}

TEST_CASE("hop is deterministic") {
  const HopContext c = ctx(HopMode::Connection, kMasterKey, 123456);
  CHECK(hop(c) == hop(c));
}

TEST_CASE("hop sets hold 32 distinct channels") {
  for (HopSetKind k : {HopSetKind::Inquiry, HopSetKind::InquiryResponse, HopSetKind::Page, HopSetKind::PageResponse}) {
    const auto s = hop_set(k, kSlaveKey);
    CHECK(std::set<int>(s.begin(), s.end()).size() == 32);
  }
}

TEST_CASE("connection mode spreads over the band") {
  std::set<int> window;
  for (std::uint32_t slot = 0; slot < 64; ++slot) window.insert(connection_channel(kMasterKey, 2 * (1000 + slot)));
  CHECK(window.size() >= 40);

  std::array<int, kNumHopChannels> hist{};
  for (std::uint32_t slot = 0; slot < (1u << 14); ++slot) ++hist[std::size_t(connection_channel(kMasterKey, 2 * slot))];
  const auto [lo, hi] = std::minmax_element(hist.begin(), hist.end());
  CHECK(*lo > 0);
  CHECK(double(*hi) / double(*lo) < 1.3);
}

TEST_CASE("inquiry hops stay in the inquiry set and consecutive hops differ") {
  const auto set = hop_set(HopSetKind::Inquiry, inquiry_key());
  const std::set<int> members(set.begin(), set.end());
  HopContext c = ctx(HopMode::Inquiry, inquiry_key(), 0);
  for (std::uint32_t start : {0u, 5000u, 77777u}) {
    int prev = -1;
    c.train_origin = start;
    for (std::uint32_t slot = 0; slot < 64; slot += 2) {  // 32 consecutive even slots
      for (std::uint32_t half = 0; half < 2; ++half) {
        c.clock.clkn = start + 2 * slot + half;
        const int ch = hop(c);
        REQUIRE(members.count(ch) == 1);
        CHECK(ch != prev);
        prev = ch;
      }
    }
  }
}

TEST_CASE("train schedule") {
  CHECK(train_schedule(0) == Train::A);
  const std::uint32_t rep = kClkPerRepetition;
  CHECK(train_schedule(255 * rep) == Train::A);
  CHECK(train_schedule(256 * rep) == Train::B);
  CHECK(train_schedule(511 * rep) == Train::B);
  CHECK(train_schedule(512 * rep) == Train::A);
  for (std::uint32_t t = 0; t < 4 * 512 * rep; t += 97) CHECK(train_schedule(t) == train_schedule(t + 512 * rep));
  CHECK(train_schedule(rep, 256, true) == Train::B);
}

TEST_CASE("each train covers 16 distinct channels per repetition") {
  HopContext c = ctx(HopMode::Inquiry, inquiry_key(), 0);
  std::set<int> a, b;
  for (std::uint32_t clk = 0; clk < kClkPerRepetition; ++clk) {
    if (clk & 2) continue;  // receive half-slots
    c.clock.clkn = clk;
    a.insert(hop(c));
    c.clock.clkn = clk + 256 * kClkPerRepetition;
    b.insert(hop(c));
  }
  CHECK(a.size() == 16);
  CHECK(b.size() == 16);
  std::set<int> both = a;
  both.insert(b.begin(), b.end());
  CHECK(both.size() == 32);
}

TEST_CASE("scan channel is constant within 1.28 s and covers the set over 32 windows") {
  const std::uint32_t per_window = 1u << 12;  // CLKN ticks in 1.28 s
  for (HopMode m : {HopMode::InquiryScan, HopMode::PageScan}) {
    const std::uint32_t key = m == HopMode::InquiryScan ? inquiry_key() : kSlaveKey;
    const auto set = hop_set(m == HopMode::InquiryScan ? HopSetKind::Inquiry : HopSetKind::Page, key);
    const std::set<int> members(set.begin(), set.end());
    std::set<int> seen;
    for (std::uint32_t w = 0; w < 32; ++w) {
      const std::uint32_t base = (w + 3) * per_window;
      const int ch = scan_channel(m, key, base);
      CHECK(scan_channel(m, key, base + per_window - 1) == ch);
      CHECK(scan_channel(m, key, base + 1234) == ch);
      CHECK(members.count(ch) == 1);
      seen.insert(ch);
    }
    CHECK(seen.size() == 32);
  }
}

TEST_CASE("inquirer and scanner meet within 2 x 256 x 16 transmit slots") {
  std::mt19937_64 g(7);
  const std::uint32_t bound_slots = 2 * 256 * 16;
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint32_t start = std::uint32_t(g()) & kClockMask & ~3u;
    const std::uint32_t scanner_phase = std::uint32_t(g()) & kClockMask;
    HopContext inq = ctx(HopMode::Inquiry, inquiry_key(), start);
    inq.train_origin = start;
    bool met = false;
    for (std::uint32_t slot = 0; slot < bound_slots && !met; slot += 2) {
      for (std::uint32_t half = 0; half < 2 && !met; ++half) {
        inq.clock.clkn = (start + 2 * slot + half) & kClockMask;
        const std::uint32_t scan_clkn = (inq.clock.clkn + scanner_phase) & kClockMask;
        met = hop(inq) == scan_channel(HopMode::InquiryScan, inquiry_key(), scan_clkn);
      }
    }
    CHECK(met);
  }
}

TEST_CASE("page train centred on the estimate hits the scanner's channel in the first train") {
  const auto set = hop_set(HopSetKind::Page, kSlaveKey);
  for (std::uint32_t clkn : {0u, 4096u * 5, 4096u * 17 + 100}) {
    const int x = scan_index(kSlaveKey, clkn);
    HopContext page = ctx(HopMode::Page, kSlaveKey, 0);
    page.x_est = x;
    bool hit = false;
    for (std::uint32_t clk = 0; clk < kClkPerRepetition; ++clk) {
      if (clk & 2) continue;
      page.clock.clkn = clk;
      hit |= hop(page) == set[std::size_t(x)];
    }
    CHECK(hit);
  }
}

TEST_CASE("master and synchronized slave agree on every connection slot") {
  const std::uint32_t master_clkn = 0x0123456;
  const std::uint32_t slave_clkn = 0x0ABCDEF;
  const std::int64_t offset = std::int64_t(master_clkn) - std::int64_t(slave_clkn);
  for (std::uint32_t slot = 0; slot < 100000; ++slot) {
    const HopContext m = ctx(HopMode::Connection, kMasterKey, master_clkn + 2 * slot);
    const HopContext s = ctx(HopMode::Connection, kMasterKey, slave_clkn + 2 * slot, offset);
    REQUIRE(hop(m) == hop(s));
  }
}

TEST_CASE("clock wraps modulo 2^28") {
  const BtClock c{kClockMask, 1};
  CHECK(c.clk() == 0);
  const BtClock d{0, -1};
  CHECK(d.clk() == kClockMask);
}
