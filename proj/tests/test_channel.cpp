#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "btsim/airframe.hpp"
#include "btsim/channel.hpp"

using namespace btsim;

namespace {

using Tx = std::vector<Transmission>;

// Runs the channel over a list of per-tick outputs and records what a
// receiver on `rf` observes after each tick.
std::vector<AirSymbol> observe_run(Channel& ch, const std::vector<Tx>& ticks, int rf) {
  std::vector<AirSymbol> seen;
  for (const auto& t : ticks) {
    ch.step(t);
    seen.push_back(ch.observe(rf));
  }
  return seen;
}

}  // namespace

TEST_CASE("resolve examples") {
  Rng rng(1);
  const ChannelMap empty = resolve(Tx{}, 0.0, rng);
  for (auto s : empty) CHECK(s == AirSymbol::Z);

  const ChannelMap one = resolve(Tx{{1, 40, AirSymbol::One}}, 0.0, rng);
  CHECK(one[40] == AirSymbol::One);
  CHECK(one[39] == AirSymbol::Z);

  const ChannelMap two = resolve(Tx{{1, 40, AirSymbol::One}, {2, 40, AirSymbol::Zero}}, 0.0, rng);
  CHECK(two[40] == AirSymbol::X);

  const ChannelMap same = resolve(Tx{{1, 40, AirSymbol::One}, {2, 40, AirSymbol::One}}, 0.0, rng);
  CHECK(same[40] == AirSymbol::X);

  const ChannelMap apart = resolve(Tx{{1, 40, AirSymbol::One}, {2, 41, AirSymbol::Zero}}, 0.0, rng);
  CHECK(apart[40] == AirSymbol::One);
  CHECK(apart[41] == AirSymbol::Zero);
}

TEST_CASE("apply_noise examples") {
  Rng rng(2);
  CHECK(apply_noise(AirSymbol::One, 0.0, rng) == AirSymbol::One);
  for (int i = 0; i < 1000; ++i) {
    CHECK(apply_noise(AirSymbol::X, 0.5, rng) == AirSymbol::X);
    CHECK(apply_noise(AirSymbol::Z, 0.5, rng) == AirSymbol::Z);
  }
  CHECK(apply_noise(AirSymbol::One, 1.0, rng) == AirSymbol::Zero);
  CHECK(apply_noise(AirSymbol::Zero, 1.0, rng) == AirSymbol::One);
}

TEST_CASE("flip fraction at ber 0.01 over 10^6 draws") {
  Rng rng(3);
  const int n = 1000000;
  int flips = 0;
  for (int i = 0; i < n; ++i) flips += apply_noise(AirSymbol::Zero, 0.01, rng) == AirSymbol::One;
  const double f = double(flips) / n;
  // Binomial: sigma = sqrt(0.01 * 0.99 / 1e6) ~ 1e-4, so the band is ~10 sigma wide.
  CHECK(f == doctest::Approx(0.01).epsilon(0.1));
  CHECK(std::abs(f - 0.01) <= 0.001);
}

TEST_CASE("channel flips only active symbols at the configured rate") {
  Channel ch(ChannelParams{0.01, 0, "channel"}, 4);
  const int n = 200000;
  for (int i = 0; i < n; ++i) ch.step(Tx{{0, 10, AirSymbol::One}});
  CHECK(std::abs(double(ch.flips()) / n - 0.01) <= 0.001);
}

TEST_CASE("delay 0 is the identity") {
  Channel ch(ChannelParams{0.0, 0, "channel"}, 5);
  std::vector<Tx> ticks(20);
  ticks[3] = {{0, 7, AirSymbol::One}};
  ticks[4] = {{0, 7, AirSymbol::Zero}};
  const auto seen = observe_run(ch, ticks, 7);
  for (std::size_t t = 0; t < seen.size(); ++t) {
    const AirSymbol expected = t == 3 ? AirSymbol::One : t == 4 ? AirSymbol::Zero : AirSymbol::Z;
    CHECK(seen[t] == expected);
  }
}

TEST_CASE("delay 5: symbol sent at t=100 is observed at t=105") {
  Channel ch(ChannelParams{0.0, 5, "channel"}, 6);
  std::vector<Tx> ticks(120);
  ticks[100] = {{0, 12, AirSymbol::One}};
  const auto seen = observe_run(ch, ticks, 12);
  for (std::size_t t = 0; t < seen.size(); ++t) CHECK(seen[t] == (t == 105 ? AirSymbol::One : AirSymbol::Z));
}

TEST_CASE("symbols before the first tick read Z under delay") {
  Channel ch(ChannelParams{0.0, 50, "channel"}, 7);
  std::vector<Tx> ticks(50, Tx{{0, 1, AirSymbol::One}});
  for (auto s : observe_run(ch, ticks, 1)) CHECK(s == AirSymbol::Z);
}

TEST_CASE("collision is conserved regardless of ber and delay") {
  for (double ber : {0.0, 0.3, 1.0}) {
    for (int delay : {0, 3}) {
      Channel ch(ChannelParams{ber, delay, "channel"}, 8);
      std::vector<Tx> ticks(40);
      for (std::size_t t = 0; t < ticks.size(); ++t) {
        ticks[t] = {{0, 20, AirSymbol::One}};
        if (t % 2 == 0) ticks[t].push_back({1, 20, AirSymbol::Zero});
      }
      const auto seen = observe_run(ch, ticks, 20);
      for (std::size_t t = std::size_t(delay); t < seen.size(); ++t) {
        const bool collided = (t - std::size_t(delay)) % 2 == 0;
        CHECK((seen[t] == AirSymbol::X) == collided);
      }
    }
  }
}

TEST_CASE("channels are isolated") {
  Channel a(ChannelParams{0.2, 0, "channel"}, 9);
  Channel b(ChannelParams{0.2, 0, "channel"}, 9);
  // Same seed; b additionally carries traffic on other channels. Channel 30's
  // symbol stream must not see that traffic as anything but a different noise draw order.
  for (int t = 0; t < 1000; ++t) {
    a.step(Tx{{0, 30, AirSymbol::One}});
    b.step(Tx{{0, 30, AirSymbol::One}, {1, 31, AirSymbol::Zero}, {2, 50, AirSymbol::One}});
    CHECK(is_bit(b.observe(30)));
    CHECK(a.observe(31) == AirSymbol::Z);
    CHECK(b.observe(31) != AirSymbol::X);
    CHECK(b.observe(29) == AirSymbol::Z);
  }
}

TEST_CASE("identical inputs and seed give identical streams") {
  auto run = [](std::uint64_t seed) {
    Channel ch(ChannelParams{0.05, 2, "channel"}, seed);
    std::vector<AirSymbol> out;
    for (int t = 0; t < 5000; ++t) {
      ch.step(Tx{{0, t % 79, (t & 1) ? AirSymbol::One : AirSymbol::Zero}});
      out.push_back(ch.observe((t + 77) % 79));
    }
    return out;
  };
  CHECK(run(11) == run(11));
  CHECK(run(11) != run(12));
}

TEST_CASE("ber 1 inverts every bit so no packet parses") {
  Packet id;
  id.access = AccessCode::giac();
  const Bits frame = build_packet(id, 0);
  Channel ch(ChannelParams{1.0, 0, "channel"}, 10);
  std::vector<AirSymbol> rx;
  for (auto b : frame) {
    ch.step(Tx{{0, 5, bit_symbol(b)}});
    rx.push_back(ch.observe(5));
  }
  for (std::size_t i = 0; i < rx.size(); ++i) CHECK(rx[i] == bit_symbol(frame[i] ^ 1));
  const ParseResult r = parse_packet(rx, id.access, 0);
  CHECK(r.status == ParseStatus::AccessMiss);
  CHECK(r.access_distance == 68);
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(ChannelParams({-0.1, 0, "c"}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ChannelParams({1.1, 0, "c"}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ChannelParams({0.0, 625, "c"}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(ChannelParams({0.0, -1, "c"}).validate(), std::invalid_argument);
  CHECK_NOTHROW(ChannelParams({0.0, 624, "c"}).validate());
}
