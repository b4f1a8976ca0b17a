#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <set>
#include <sstream>

#include "btsim/engine.hpp"
#include "btsim/recipes.hpp"
#include "btsim/vcd.hpp"

using namespace btsim;

namespace {

constexpr std::int64_t kSlot = 625;

std::string field_of(const Scenario& sc) {
  try {
    validate(sc);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "";
}

std::string vcd_of(const RunTrace& tr) {
  std::ostringstream os;
  write_vcd(os, tr);
  return os.str();
}

std::string events_text(const RunTrace& tr) {
  std::ostringstream os;
  for (const auto& e : tr.events)
    os << e.t_us << ' ' << e.clk << ' ' << e.device << ' ' << int(e.type) << ' ' << e.value << ' ' << e.detail << '\n';
  return os.str();
}

bool same_metrics(const RunMetrics& a, const RunMetrics& b) {
  if (a.inquiry_slots != b.inquiry_slots || a.page_slots != b.page_slots) return false;
  if (a.inquiry_success != b.inquiry_success || a.page_success != b.page_success) return false;
  if (a.packets_lost != b.packets_lost || a.buffer_drops != b.buffer_drops) return false;
  if (a.devices.size() != b.devices.size()) return false;
  for (std::size_t i = 0; i < a.devices.size(); ++i) {
    const auto &x = a.devices[i], &y = b.devices[i];
    if (x.rf_tx_us != y.rf_tx_us || x.rf_rx_us != y.rf_rx_us || x.total_us != y.total_us) return false;
  }
  return true;
}

GridPoint ber_point(double ber) {
  return GridPoint{"ber", {ber}, [ber](Scenario& sc) { sc.channel.ber = ber; }};
}

}  // namespace

TEST_CASE("the three-slave piconet builds with four devices in Standby") {
  const Scenario sc = piconet_scenario(3);
  auto w = build_world(sc);
  CHECK(w->size() == 4);
  for (std::size_t i = 0; i < w->size(); ++i) CHECK(w->device(i).state() == DeviceState::Standby);
  CHECK(w->now() == 0);
}

TEST_CASE("validation errors name the offending field") {
  Scenario empty;
  empty.duration_slots = 10;
  CHECK(field_of(empty) == "devices");
  CHECK_THROWS_AS(build_world(empty), ValidationError);

  Scenario sc = piconet_scenario(2);
  CHECK(field_of(sc).empty());

  Scenario dup_name = sc;
  dup_name.devices[2].config.name = "slave1";
  CHECK(field_of(dup_name) == "devices[2].name");

  Scenario dup_addr = sc;
  dup_addr.devices[2].config.addr = dup_addr.devices[1].config.addr;
  CHECK(field_of(dup_addr) == "devices[2].addr");

  Scenario no_time = sc;
  no_time.duration_slots = 0;
  CHECK(field_of(no_time) == "duration_slots");

  Scenario diac = sc;
  diac.devices[1].config.addr.lap = kDiacLapBase + 5;
  CHECK(field_of(diac) == "devices[1].addr");

  Scenario close_code = sc;
  close_code.devices[1].config.addr.lap = kGiacLap ^ 1;
  CHECK(field_of(close_code) == "devices[1].addr");

  Scenario ber = sc;
  ber.channel.ber = 2.0;
  CHECK(field_of(ber) == "channel.ber");

  Scenario timeout = sc;
  timeout.devices[0].config.timeouts.inquiry_timeout = 100;
  CHECK(field_of(timeout) == "devices[0].inquiry_timeout");

  Scenario traffic = sc;
  traffic.traffic.push_back(TrafficSpec{"master", "nobody", 10});
  CHECK(field_of(traffic) == "traffic[0].dest");

  Scenario bytes = sc;
  bytes.traffic.push_back(TrafficSpec{"master", "slave1", 10, PacketKind::Dm1, 18});
  CHECK(field_of(bytes) == "traffic[0].bytes");

  Scenario page = sc;
  TimedCommand c;
  c.command.type = CommandType::EnablePage;
  page.devices[0].commands.push_back(c);
  CHECK(field_of(page) == "devices[0].commands[1].target");

  Scenario stop = sc;
  stop.stop = StopSpec{{EventType::PageComplete}, 0};
  CHECK(field_of(stop) == "stop.count");
}

TEST_CASE("same scenario built twice gives identical initial RNG states") {
  const Scenario sc = piconet_scenario(3);
  auto a = build_world(sc);
  auto b = build_world(sc);
  for (std::size_t i = 0; i < a->size(); ++i) CHECK(a->device(i).rng() == b->device(i).rng());
  CHECK(a->channel().rng() == b->channel().rng());
}

TEST_CASE("adding a device does not perturb the other streams") {
  const Scenario two = piconet_scenario(2);
  const Scenario three = piconet_scenario(3);
  auto a = build_world(two);
  auto b = build_world(three);
  for (std::size_t i = 0; i < a->size(); ++i) CHECK(a->device(i).rng() == b->device(i).rng());
  CHECK(a->channel().rng() == b->channel().rng());
  Scenario other = two;
  other.seed = two.seed + 1;
  auto c = build_world(other);
  CHECK_FALSE(a->device(0).rng() == c->device(0).rng());
}

TEST_CASE("a 775-slot run spans exactly 775 slots") {
  Scenario sc = piconet_scenario(3);
  sc.duration_slots = 775;
  const RunResult r = run(sc);
  CHECK(r.trace.end_us - r.trace.start_us == 775 * kSlot);
  for (const auto& s : r.trace.samples) {
    CHECK(s.front().t_us == 0);
    for (std::size_t i = 1; i < s.size(); ++i) REQUIRE(s[i].t_us > s[i - 1].t_us);
    CHECK(s.back().t_us < r.trace.end_us);
  }
  for (std::size_t i = 1; i < r.trace.events.size(); ++i)
    REQUIRE(r.trace.events[i].t_us >= r.trace.events[i - 1].t_us);
  for (const auto& e : r.trace.events) REQUIRE(std::size_t(e.device) < sc.devices.size());
}

TEST_CASE("stop predicate: all three slaves connected ends the run early") {
  Scenario sc = piconet_scenario(3);
  sc.seed = 7;
  auto w = build_world(sc);
  const std::int64_t limit = sc.duration_slots * kSlot;
  w->run_until(limit, [](const World& world) {
    for (std::size_t i = 1; i < world.size(); ++i)
      if (world.device(i).state() != DeviceState::ConnectionActive) return false;
    return true;
  });
  CHECK(w->now() < limit);
  for (std::size_t i = 1; i < w->size(); ++i) CHECK(w->device(i).state() == DeviceState::ConnectionActive);
}

TEST_CASE("scenario stop condition counts events") {
  Scenario sc = piconet_scenario(3);
  sc.seed = 7;
  sc.stop = StopSpec{{EventType::PageComplete}, 2};
  const RunResult r = run(sc);
  int pages = 0;
  for (const auto& e : r.trace.events) pages += e.type == EventType::PageComplete;
  CHECK(pages == 2);
  CHECK(r.trace.end_us < sc.duration_slots * kSlot);
}

TEST_CASE("runs are reproducible byte for byte") {
  Scenario sc = piconet_scenario(3);
  sc.seed = 99;
  sc.channel.ber = 0.001;
  const RunResult a = run(sc);
  const RunResult b = run(sc);
  CHECK(vcd_of(a.trace) == vcd_of(b.trace));
  CHECK(events_text(a.trace) == events_text(b.trace));
  CHECK(same_metrics(a.metrics, b.metrics));
  Scenario other = sc;
  other.seed = 100;
  CHECK(events_text(run(other).trace) != events_text(a.trace));
}

TEST_CASE("channel_seed decouples noise from device behavior") {
  Scenario sc = inquiry_scenario(0.01);
  sc.seed = 5;
  sc.channel_seed = 1;
  auto a = build_world(sc);
  sc.channel_seed = 2;
  auto b = build_world(sc);
  CHECK(a->device(0).rng() == b->device(0).rng());
  CHECK_FALSE(a->channel().rng() == b->channel().rng());
}

TEST_CASE("anchored commands fire relative to the anchor event") {
  Scenario sc = connected_pair_scenario();
  sc.seed = 3;
  sc.duration_slots = 3000;
  sc.record_trace = true;
  Command c;
  c.type = CommandType::EnableSniff;
  c.target = sc.devices[1].config.addr;
  c.interval = 40;
  TimedCommand tc;
  tc.at_slot = 50;
  tc.command = c;
  tc.after = Anchor{EventType::PageComplete, 1};
  sc.devices[0].commands.push_back(tc);
  const RunResult r = run(sc);
  std::int64_t page_t = -1, accepted_t = -1;
  for (const auto& e : r.trace.events) {
    if (e.type == EventType::PageComplete && page_t < 0) page_t = e.t_us;
    if (e.type == EventType::NegotiationAccepted && accepted_t < 0) accepted_t = e.t_us;
  }
  REQUIRE(page_t >= 0);
  REQUIRE(accepted_t >= 0);
  CHECK(accepted_t >= page_t + 1 + 50 * kSlot);
  CHECK(accepted_t < page_t + 1 + 60 * kSlot);
}

TEST_CASE("measurement window anchored on an event") {
  Scenario sc = connected_pair_scenario();
  sc.seed = 3;
  const RunResult r = run(sc);
  REQUIRE(r.metrics.page_success);
  for (const auto& d : r.metrics.devices) CHECK(d.total_us == 6000 * kSlot);

  // An anchor that never occurs leaves the window empty.
  Scenario never = connected_pair_scenario();
  never.seed = 3;
  never.devices.pop_back();
  never.duration_slots = 2200;
  const RunResult n = run(never);
  for (const auto& d : n.metrics.devices) CHECK(d.total_us == 0);
}

TEST_CASE("sweep seeds") {
  std::set<std::uint64_t> seen;
  for (std::size_t p = 0; p < 5; ++p)
    for (std::size_t r = 0; r < 20; ++r) {
      const RunSeeds s = sweep_seeds(1, p, r, false);
      CHECK(seen.insert(s.device).second);
      CHECK(seen.insert(s.channel).second);
    }
  for (std::size_t r = 0; r < 10; ++r) {
    CHECK(sweep_seeds(1, 0, r, true).device == sweep_seeds(1, 4, r, true).device);
    CHECK(sweep_seeds(1, 0, r, true).channel == sweep_seeds(1, 4, r, true).channel);
    CHECK(sweep_seeds(1, 0, r, true).device != sweep_seeds(1, 0, r + 1, true).device);
  }
  CHECK(sweep_seeds(1, 0, 0, false).device != sweep_seeds(2, 0, 0, false).device);
}

TEST_CASE("monte_carlo rejects an empty grid and non-positive run counts") {
  const Scenario sc = inquiry_scenario(0.0);
  SweepOptions opt;
  CHECK_THROWS_AS(monte_carlo(sc, {}, opt), std::invalid_argument);
  opt.runs = 0;
  CHECK_THROWS_AS(monte_carlo(sc, {ber_point(0.0)}, opt), std::invalid_argument);
}

TEST_CASE("monte_carlo rows follow the grid and are independent of threading") {
  const Scenario sc = inquiry_scenario(0.0);
  const std::vector<GridPoint> grid = {ber_point(0.0), ber_point(0.01), ber_point(0.005)};
  SweepOptions opt;
  opt.runs = 4;
  opt.seed = 3;
  opt.threads = 1;
  const auto one = monte_carlo(sc, grid, opt);
  opt.threads = 3;
  const auto three = monte_carlo(sc, grid, opt);
  REQUIRE(one.size() == 3);
  REQUIRE(three.size() == 3);
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(one[p].point.values == grid[p].values);
    CHECK(one[p].aggregate.runs == 4);
    for (std::size_t r = 0; r < 4; ++r) CHECK(same_metrics(one[p].runs[r], three[p].runs[r]));
  }
}

TEST_CASE("changing one grid point never changes another point's results") {
  const Scenario sc = inquiry_scenario(0.0);
  SweepOptions opt;
  opt.runs = 3;
  opt.seed = 8;
  const auto a = monte_carlo(sc, {ber_point(0.0), ber_point(0.01)}, opt);
  const auto b = monte_carlo(sc, {ber_point(0.02), ber_point(0.01)}, opt);
  for (std::size_t r = 0; r < 3; ++r) CHECK(same_metrics(a[1].runs[r], b[1].runs[r]));
}

TEST_CASE("paired sweeps share device behavior across points") {
  const Scenario sc = inquiry_scenario(0.0);
  SweepOptions opt;
  opt.runs = 3;
  opt.seed = 8;
  opt.paired = true;
  const auto a = monte_carlo(sc, {ber_point(0.0), ber_point(0.0)}, opt);
  for (std::size_t r = 0; r < 3; ++r) CHECK(same_metrics(a[0].runs[r], a[1].runs[r]));
}

TEST_CASE("a raised cancel flag returns only completed points") {
  const Scenario sc = inquiry_scenario(0.0);
  std::atomic<bool> cancel{true};
  SweepOptions opt;
  opt.runs = 2;
  opt.cancel = &cancel;
  const auto res = monte_carlo(sc, {ber_point(0.0), ber_point(0.01)}, opt);
  CHECK(res.empty());
}

TEST_CASE("progress reports every run") {
  const Scenario sc = inquiry_scenario(0.0);
  SweepOptions opt;
  opt.runs = 3;
  std::size_t last = 0, calls = 0, total_seen = 0;
  opt.progress = [&](std::size_t done, std::size_t total) {
    ++calls;
    last = done;
    total_seen = total;
  };
  monte_carlo(sc, {ber_point(0.0), ber_point(0.0)}, opt);
  CHECK(calls == 6);
  CHECK(last == 6);
  CHECK(total_seen == 6);
}

TEST_CASE("thread count comes from the environment when set") {
  setenv("BTSIM_THREADS", "3", 1);
  CHECK(default_threads() == 3);
  unsetenv("BTSIM_THREADS");
  CHECK(default_threads() >= 1);
}
