#include "btsim/engine.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <set>
#include <thread>

#include "btsim/hopsel.hpp"

namespace btsim {

namespace {

constexpr int kMinAccessDistance = 14;

ValidationError rewrap(const std::string& prefix, const std::invalid_argument& e) {
  const std::string what = e.what();
  const auto colon = what.find(": ");
  if (colon == std::string::npos) return ValidationError(prefix, what);
  return ValidationError(prefix + "." + what.substr(0, colon), what.substr(colon + 2));
}

int code_distance(std::uint32_t lap_a, std::uint32_t lap_b) {
  const AccessCode a{AccessKind::DeviceAccess, lap_a};
  const AccessCode b{AccessKind::DeviceAccess, lap_b};
  return std::popcount(a.sync_word() ^ b.sync_word());
}

const Scenario& validated(const Scenario& sc) {
  validate(sc);
  return sc;
}

}  // namespace

int Scenario::device_index(const std::string& name) const {
  for (std::size_t i = 0; i < devices.size(); ++i)
    if (devices[i].config.name == name) return int(i);
  return -1;
}

void validate(const Scenario& sc) {
  if (sc.devices.empty()) throw ValidationError("devices", "must not be empty");
  if (sc.duration_slots <= 0) throw ValidationError("duration_slots", "must be positive");
  try {
    sc.channel.validate();
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    const auto colon = what.find(": ");
    throw ValidationError(what.substr(0, colon), what.substr(colon + 2));
  }
  std::set<std::string> names;
  std::set<std::uint64_t> addrs;
  for (std::size_t i = 0; i < sc.devices.size(); ++i) {
    const auto& d = sc.devices[i];
    const std::string prefix = "devices[" + std::to_string(i) + "]";
    try {
      d.config.validate();
    } catch (const std::invalid_argument& e) {
      throw rewrap(prefix, e);
    }
    if (!names.insert(d.config.name).second)
      throw ValidationError(prefix + ".name", "duplicate device name '" + d.config.name + "'");
    if (!addrs.insert(d.config.addr.as_u64()).second)
      throw ValidationError(prefix + ".addr", "duplicate BdAddr " + d.config.addr.to_string());
    if ((d.config.addr.lap & ~0x3Fu) == kDiacLapBase)
      throw ValidationError(prefix + ".addr", "LAP lies in the reserved inquiry access code range");
    for (std::size_t j = 0; j < d.commands.size(); ++j) {
      const auto& c = d.commands[j];
      const std::string cp = prefix + ".commands[" + std::to_string(j) + "]";
      if (!(c.at_slot >= 0)) throw ValidationError(cp + ".at_slot", "must not be negative");
      if (c.after && c.after->count < 1) throw ValidationError(cp + ".after.count", "must be positive");
      if (c.command.type == CommandType::EnablePage && !c.command.target)
        throw ValidationError(cp + ".target", "EnablePage requires a target address");
    }
  }
  // Access codes in use must be far enough apart for the correlator threshold.
  std::vector<std::uint32_t> laps{kGiacLap};
  for (const auto& d : sc.devices) laps.push_back(d.config.addr.lap);
  for (std::size_t i = 1; i < laps.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (laps[i] == laps[j]) continue;  // same LAP: same device-family code, allowed only across UAP/NAP
      if (code_distance(laps[i], laps[j]) < kMinAccessDistance)
        throw ValidationError("devices[" + std::to_string(i - 1) + "].addr",
                              "access code within distance " + std::to_string(kMinAccessDistance) +
                                  " of another code in use");
    }
  }
  for (std::size_t i = 0; i < sc.traffic.size(); ++i) {
    const auto& t = sc.traffic[i];
    const std::string prefix = "traffic[" + std::to_string(i) + "]";
    if (sc.device_index(t.source) < 0) throw ValidationError(prefix + ".source", "unknown device '" + t.source + "'");
    if (sc.device_index(t.dest) < 0) throw ValidationError(prefix + ".dest", "unknown device '" + t.dest + "'");
    if (t.source == t.dest) throw ValidationError(prefix + ".dest", "must differ from source");
    if (t.period_slots <= 0) throw ValidationError(prefix + ".period_slots", "must be positive");
    if (!is_data_kind(t.kind) || t.kind == PacketKind::Fhs)
      throw ValidationError(prefix + ".kind", "must be a DM or DH kind");
    if (t.bytes > capacity(t.kind) || t.bytes < -1)
      throw ValidationError(prefix + ".bytes", "must lie in [0, " + std::to_string(capacity(t.kind)) + "]");
    if (t.start_slot < 0) throw ValidationError(prefix + ".start_slot", "must not be negative");
  }
  if (sc.stop && sc.stop->count < 1) throw ValidationError("stop.count", "must be positive");
  if (sc.measure.after && sc.measure.after->count < 1)
    throw ValidationError("measure.after.count", "must be positive");
  if (sc.measure.from_slot < 0) throw ValidationError("measure.from_slot", "must not be negative");
  if (sc.measure.to_slot && *sc.measure.to_slot <= sc.measure.from_slot)
    throw ValidationError("measure.to_slot", "must exceed measure.from_slot");
}

World::World(const Scenario& sc)
    : sc_(validated(sc)),
      channel_(sc.channel, derive_seed(sc.channel_seed.value_or(sc.seed), "channel/" + sc.channel.rng_stream)) {
  events_.reserve(1024);
  for (std::size_t i = 0; i < sc_.devices.size(); ++i) {
    const auto& dev = sc_.devices[i];
    devices_.push_back(std::make_unique<Device>(int(i), dev.config,
                                                derive_seed(sc_.seed, "device/" + dev.config.name), &events_));
    for (const auto& c : dev.commands) {
      const std::int64_t offset = std::llround(c.at_slot * kSlotUs);
      if (c.after) {
        anchored_.push_back(AnchoredCommand{*c.after, offset, int(i), c.command});
        anchored_type_[int(c.after->event)] = true;
      } else {
        commands_.push_back(PendingCommand{offset, int(i), c.command});
      }
    }
  }
  std::stable_sort(commands_.begin(), commands_.end(),
                   [](const PendingCommand& a, const PendingCommand& b) { return a.t < b.t; });
  for (const auto& t : sc_.traffic) {
    TrafficState s;
    s.source = sc_.device_index(t.source);
    s.dest = sc_.devices[std::size_t(sc_.device_index(t.dest))].config.addr;
    s.kind = t.kind;
    s.bytes = t.bytes < 0 ? capacity(t.kind) : t.bytes;
    s.period_us = std::int64_t(t.period_slots) * kSlotUs;
    s.next_us = t.start_slot * kSlotUs;
    traffic_.push_back(s);
  }
  trace_.meta = RunMetadata{sc_.seed, kSchemaVersion, kRngId, kHopKernelId, sc_.name};
  for (const auto& d : sc_.devices) trace_.device_names.push_back(d.config.name);
  trace_.samples.resize(devices_.size());
  if (sc_.measure.after) {
    measure_pending_ = true;
    anchored_type_[int(sc_.measure.after->event)] = true;
    measure_from_us_ = measure_to_us_ = -1;
  } else {
    measure_from_us_ = sc_.measure.from_slot * kSlotUs;
    measure_to_us_ = sc_.measure.to_slot ? *sc_.measure.to_slot * kSlotUs : sc_.duration_slots * kSlotUs;
  }
  outputs_.reserve(devices_.size());
}

const Device& World::device(const std::string& name) const {
  const int i = sc_.device_index(name);
  if (i < 0) throw std::invalid_argument("unknown device '" + name + "'");
  return *devices_[std::size_t(i)];
}

void World::deliver_commands() {
  while (next_command_ < commands_.size() && commands_[next_command_].t <= now_) {
    const auto& pc = commands_[next_command_++];
    Device& d = *devices_[std::size_t(pc.device)];
    try {
      d.command(pc.command, now_);
    } catch (const CommandRejected& e) {
      events_.push_back(Event{now_, d.clk(now_), pc.device, EventType::CommandRejected, 0.0, e.what()});
    }
  }
}

void World::generate_traffic() {
  for (auto& s : traffic_) {
    if (now_ < s.next_us) continue;
    s.next_us += s.period_us;
    std::vector<std::uint8_t> payload(std::size_t(s.bytes));
    for (std::size_t k = 0; k < payload.size(); ++k) payload[k] = std::uint8_t((now_ / kSlotUs + std::int64_t(k)) & 0xFF);
    devices_[std::size_t(s.source)]->enqueue_data(s.dest, s.kind, std::move(payload));
  }
}

void World::snapshot_counters(std::vector<DeviceCounters>& into) const {
  into.clear();
  for (const auto& d : devices_) into.push_back(d->counters());
}

void World::sample(std::size_t i) {
  const Device& d = *devices_[i];
  const Sample s{now_, d.state(), d.gate().enable_tx_rf, d.gate().enable_rx_rf, d.gate().tuned_channel};
  auto& v = trace_.samples[i];
  if (v.empty() || !v.back().same_signals(s)) v.push_back(s);
}

void World::step() {
  if (now_ == measure_from_us_) {
    snapshot_counters(at_from_);
    have_from_ = true;
  }
  if (now_ == measure_to_us_) {
    snapshot_counters(at_to_);
    have_to_ = true;
  }
  deliver_commands();
  if (!traffic_.empty()) generate_traffic();

  outputs_.clear();
  for (auto& d : devices_) {
    d->tx_phase(now_);
    if (auto o = d->output()) outputs_.push_back(*o);
  }
  channel_.step(outputs_);
  for (auto& d : devices_) {
    const RfGate& g = d->gate();
    if (g.enable_rx_rf) {
      d->rx_phase(now_, channel_.observe(g.tuned_channel));
      if (!d->rx_buffer().empty()) d->take_received();
    }
  }
  if (sc_.record_trace)
    for (std::size_t i = 0; i < devices_.size(); ++i) sample(i);

  if (events_.size() > events_seen_) scan_events();
  ++now_;
}

std::optional<std::int64_t> World::anchor_time(const Anchor& a) const {
  const auto& v = event_ticks_[int(a.event)];
  if (int(v.size()) < a.count) return std::nullopt;
  return v[std::size_t(a.count - 1)] + 1;
}

void World::scan_events() {
  bool fresh_anchor = false;
  for (std::size_t k = events_seen_; k < events_.size(); ++k) {
    const Event& e = events_[k];
    if (anchored_type_[int(e.type)]) {
      event_ticks_[int(e.type)].push_back(e.t_us);
      fresh_anchor = true;
    }
    if (sc_.stop) {
      const auto& types = sc_.stop->events;
      if (std::find(types.begin(), types.end(), e.type) != types.end()) ++stop_hits_;
    }
  }
  events_seen_ = events_.size();
  if (sc_.stop && stop_hits_ >= sc_.stop->count) stopped_ = true;
  if (!fresh_anchor) return;
  bool inserted = false;
  for (auto it = anchored_.begin(); it != anchored_.end();) {
    if (const auto at = anchor_time(it->after)) {
      commands_.push_back(PendingCommand{std::max(*at + it->offset_us, now_ + 1), it->device, it->command});
      it = anchored_.erase(it);
      inserted = true;
    } else {
      ++it;
    }
  }
  if (inserted)
    std::stable_sort(commands_.begin() + std::ptrdiff_t(next_command_), commands_.end(),
                     [](const PendingCommand& a, const PendingCommand& b) { return a.t < b.t; });
  if (measure_pending_) {
    if (const auto at = anchor_time(*sc_.measure.after)) {
      measure_pending_ = false;
      measure_from_us_ = *at + sc_.measure.from_slot * kSlotUs;
      measure_to_us_ = sc_.measure.to_slot ? *at + *sc_.measure.to_slot * kSlotUs : sc_.duration_slots * kSlotUs;
    }
  }
}

void World::run_until(std::int64_t end_us, const std::function<bool(const World&)>& stop) {
  while (now_ < end_us && !stopped_) {
    step();
    if (stop && stop(*this)) break;
  }
}

RunTrace World::finish_trace() const {
  RunTrace t = trace_;
  t.events = events_;
  t.start_us = 0;
  t.end_us = now_;
  return t;
}

RunMetrics World::metrics() const {
  RunMetrics m;
  for (const auto& e : events_) {
    if (e.type == EventType::InquiryComplete && !m.inquiry_success) {
      m.inquiry_success = true;
      m.inquiry_slots = e.value;
    } else if (e.type == EventType::PageComplete && !m.page_success) {
      m.page_success = true;
      m.page_slots = e.value;
    }
  }
  std::vector<DeviceCounters> now_counters;
  snapshot_counters(now_counters);
  const std::vector<DeviceCounters>& to = have_to_ ? at_to_ : now_counters;
  const std::int64_t to_us = have_to_ ? measure_to_us_ : now_;
  const std::int64_t from_us = have_from_ ? measure_from_us_ : to_us;
  for (std::size_t i = 0; i < devices_.size(); ++i) {
    DeviceActivity a;
    a.name = sc_.devices[i].config.name;
    const DeviceCounters zero{};
    const DeviceCounters& f = have_from_ ? at_from_[i] : to[i];
    const DeviceCounters& c = to[i];
    (void)zero;
    a.rf_tx_us = c.rf_tx_us - f.rf_tx_us;
    a.rf_rx_us = c.rf_rx_us - f.rf_rx_us;
    a.total_us = to_us - from_us;
    a.packets_lost = c.packets_lost - f.packets_lost;
    a.buffer_drops = c.buffer_drops - f.buffer_drops;
    a.tx_slots = c.tx_slots - f.tx_slots;
    m.packets_lost += a.packets_lost;
    m.buffer_drops += a.buffer_drops;
    m.devices.push_back(a);
  }
  return m;
}

std::unique_ptr<World> build_world(const Scenario& sc) { return std::make_unique<World>(sc); }

RunResult run(const Scenario& sc) {
  World w(sc);
  w.run_until(sc.duration_slots * kSlotUs);
  return RunResult{w.finish_trace(), w.metrics()};
}

int default_threads() {
  if (const char* env = std::getenv("BTSIM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RunSeeds sweep_seeds(std::uint64_t seed, std::size_t point, std::size_t run, bool paired) {
  const std::uint64_t p = paired ? 0 : std::uint64_t(point) + 1;
  return RunSeeds{derive_seed(seed, p, run), derive_seed(seed ^ 0xC4A77E15EEDull, p, run)};
}

std::vector<PointResult> monte_carlo(const Scenario& base, const std::vector<GridPoint>& grid,
                                     const SweepOptions& options) {
  if (grid.empty()) throw std::invalid_argument("grid: must not be empty");
  if (options.runs < 1) throw std::invalid_argument("runs: must be at least 1");

  std::vector<Scenario> templates;
  for (const auto& g : grid) {
    Scenario sc = base;
    if (g.apply) g.apply(sc);
    sc.record_trace = false;
    for (auto& d : sc.devices) d.config.record_packets = false;
    validate(sc);
    templates.push_back(std::move(sc));
  }

  const std::size_t runs = std::size_t(options.runs);
  const std::size_t total = grid.size() * runs;
  std::vector<PointResult> out(grid.size());
  for (std::size_t p = 0; p < grid.size(); ++p) {
    out[p].point = grid[p];
    out[p].runs.resize(runs);
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::vector<std::atomic<std::size_t>> completed(grid.size());
  std::mutex progress_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      if (options.cancel && options.cancel->load()) return;
      const std::size_t job = next.fetch_add(1);
      if (job >= total) return;
      const std::size_t p = job / runs, r = job % runs;
      try {
        Scenario sc = templates[p];
        const RunSeeds s = sweep_seeds(options.seed, p, r, options.paired);
        sc.seed = s.device;
        sc.channel_seed = s.channel;
        World w(sc);
        w.run_until(sc.duration_slots * kSlotUs);
        out[p].runs[r] = w.metrics();
        ++completed[p];
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(total);
        return;
      }
      const std::size_t d = done.fetch_add(1) + 1;
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(d, total);
      }
    }
  };
  const int threads = std::max(1, std::min<int>(options.threads > 0 ? options.threads : default_threads(), int(total)));
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<PointResult> finished;
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (completed[p].load() != runs) continue;
    out[p].aggregate = aggregate(out[p].runs);
    finished.push_back(std::move(out[p]));
  }
  return finished;
}

}  // namespace btsim
