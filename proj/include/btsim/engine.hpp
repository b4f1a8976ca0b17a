// Discrete-event loop: scenario construction, the two-phase 1 us tick, and
// Monte Carlo sweeps.
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "btsim/baseband.hpp"
#include "btsim/channel.hpp"
#include "btsim/metrics.hpp"
#include "btsim/trace.hpp"

namespace btsim {

// Raised for invalid scenarios; field is a path such as "devices[2].addr".
class ValidationError : public std::invalid_argument {
public:
  ValidationError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

private:
  std::string field_;
};

// The tick following the count-th event of a type, counted over all devices.
struct Anchor {
  EventType event = EventType::Connected;
  int count = 1;
};

// at_slot is absolute, or relative to the anchor when one is given.
struct TimedCommand {
  double at_slot = 0.0;
  Command command;
  std::optional<Anchor> after;
};

struct DeviceSpec {
  DeviceConfig config;
  std::vector<TimedCommand> commands;
};

struct TrafficSpec {
  std::string source;
  std::string dest;
  int period_slots = 100;
  PacketKind kind = PacketKind::Dm1;
  int bytes = -1;  // -1: full capacity of kind
  std::int64_t start_slot = 0;
};

// The run ends once `count` events whose type is listed have occurred.
struct StopSpec {
  std::vector<EventType> events;
  int count = 1;
};

// Window for RunMetrics activity; relative to the anchor when one is given.
// Devices get an empty window if the anchor never occurs.
struct MeasureSpec {
  std::int64_t from_slot = 0;
  std::optional<std::int64_t> to_slot;  // default: end of run
  std::optional<Anchor> after;
};

struct Scenario {
  std::string name = "scenario";
  std::vector<DeviceSpec> devices;
  ChannelParams channel;
  std::vector<TrafficSpec> traffic;
  std::int64_t duration_slots = 0;
  std::uint64_t seed = 0;
  // When set, channel noise draws from this seed instead of `seed`.
  std::optional<std::uint64_t> channel_seed;
  std::optional<StopSpec> stop;
  MeasureSpec measure;
  bool record_trace = true;

  int device_index(const std::string& name) const;  // -1 if absent
};

// Throws ValidationError naming the offending field.
void validate(const Scenario& sc);

class World {
public:
  explicit World(const Scenario& sc);

  const Scenario& scenario() const { return sc_; }
  std::int64_t now() const { return now_; }
  std::size_t size() const { return devices_.size(); }
  Device& device(std::size_t i) { return *devices_[i]; }
  const Device& device(std::size_t i) const { return *devices_[i]; }
  const Device& device(const std::string& name) const;
  const Channel& channel() const { return channel_; }
  const std::vector<Event>& events() const { return events_; }
  const RunTrace& trace() const { return trace_; }
  bool stopped() const { return stopped_; }

  // Advances one 1 us tick.
  void step();
  // Advances until end_us (exclusive) or until the stop condition holds.
  void run_until(std::int64_t end_us, const std::function<bool(const World&)>& stop = {});

  RunTrace finish_trace() const;
  RunMetrics metrics() const;

private:
  void deliver_commands();
  void generate_traffic();
  void sample(std::size_t i);
  void snapshot_counters(std::vector<DeviceCounters>& into) const;
  void scan_events();
  std::optional<std::int64_t> anchor_time(const Anchor& a) const;

  Scenario sc_;
  std::vector<Event> events_;
  std::vector<std::unique_ptr<Device>> devices_;
  Channel channel_;
  std::int64_t now_ = 0;
  bool stopped_ = false;
  std::size_t events_seen_ = 0;
  int stop_hits_ = 0;

  struct PendingCommand {
    std::int64_t t = 0;
    int device = 0;
    Command command;
  };
  std::vector<PendingCommand> commands_;  // sorted by t from next_command_ on
  std::size_t next_command_ = 0;
  struct AnchoredCommand {
    Anchor after;
    std::int64_t offset_us = 0;
    int device = 0;
    Command command;
  };
  std::vector<AnchoredCommand> anchored_;
  std::vector<std::int64_t> event_ticks_[kNumEventTypes];  // only for anchored types
  bool anchored_type_[kNumEventTypes] = {};
  bool measure_pending_ = false;

  struct TrafficState {
    int source = 0;
    BdAddr dest;
    PacketKind kind = PacketKind::Dm1;
    int bytes = 0;
    std::int64_t period_us = 0;
    std::int64_t next_us = 0;
  };
  std::vector<TrafficState> traffic_;
  std::vector<Transmission> outputs_;

  RunTrace trace_;
  std::int64_t measure_from_us_ = 0;
  std::int64_t measure_to_us_ = 0;
  std::vector<DeviceCounters> at_from_, at_to_;
  bool have_from_ = false, have_to_ = false;
};

// Builds the world for a validated scenario (throws ValidationError).
std::unique_ptr<World> build_world(const Scenario& sc);

struct RunResult {
  RunTrace trace;
  RunMetrics metrics;
};

// Runs for the scenario duration or until its stop condition.
RunResult run(const Scenario& sc);

struct GridPoint {
  std::string label;                      // e.g. "ber=0.01"
  std::vector<double> values;             // one per sweep column
  std::function<void(Scenario&)> apply;   // mutates the template
};

struct SweepOptions {
  int runs = 1;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: default parallelism
  // Common random numbers: device streams depend on the run index only, so
  // every grid point sees the same device behavior and differs only in the
  // varied parameter and the channel noise.
  bool paired = false;
  std::function<void(std::size_t done, std::size_t total)> progress;
  // When set and raised, workers stop; only fully completed points are
  // returned, in grid order.
  const std::atomic<bool>* cancel = nullptr;
};

struct PointResult {
  GridPoint point;
  Aggregate aggregate;
  std::vector<RunMetrics> runs;
};

// Default parallelism: BTSIM_THREADS if set, else hardware concurrency.
int default_threads();

// Throws std::invalid_argument for an empty grid or runs < 1.
std::vector<PointResult> monte_carlo(const Scenario& base, const std::vector<GridPoint>& grid,
                                     const SweepOptions& options);

// Seeds used for (point, run) of a sweep.
struct RunSeeds {
  std::uint64_t device = 0;
  std::uint64_t channel = 0;
};
RunSeeds sweep_seeds(std::uint64_t seed, std::size_t point, std::size_t run, bool paired);

}  // namespace btsim
