// Observables derived from runs: RF activity, completion times, success
// fractions and a linear power proxy.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "btsim/trace.hpp"

namespace btsim {

class UndefinedWindow : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct DeviceActivity {
  std::string name;
  std::int64_t rf_tx_us = 0;
  std::int64_t rf_rx_us = 0;
  std::int64_t total_us = 0;
  std::int64_t packets_lost = 0;
  std::int64_t buffer_drops = 0;
  std::int64_t tx_slots = 0;

  double activity() const { return total_us > 0 ? double(rf_tx_us + rf_rx_us) / double(total_us) : 0.0; }
};

struct RunMetrics {
  std::optional<double> inquiry_slots;
  std::optional<double> page_slots;
  bool inquiry_success = false;
  bool page_success = false;
  std::vector<DeviceActivity> devices;  // over the measurement window
  std::int64_t packets_lost = 0;
  std::int64_t buffer_drops = 0;

  const DeviceActivity* device(const std::string& name) const;
};

// Fraction of [from_us, to_us) during which the device had its tx or rx gate
// open, from the sampled trace.
double rf_activity(const RunTrace& trace, int device, std::int64_t from_us, std::int64_t to_us);
double rf_activity(const RunTrace& trace, int device);

// Duty cycle of a master: master-to-slave slots used for transmission over
// master-to-slave slots available in the window.
double duty_cycle(const DeviceActivity& master);

struct PowerModel {
  double p_tx_mw = 0.0;
  double p_rx_mw = 0.0;
  double p_idle_mw = 0.0;

  void validate() const;  // throws std::invalid_argument
};

// Energy in mJ over the activity window.
double energy_mj(const DeviceActivity& a, const PowerModel& model);

// Sum-based accumulator: merge is exactly commutative.
struct Stat {
  std::int64_t n = 0;
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(double v) {
    ++n;
    sum += v;
    sum_sq += v * v;
  }
  void merge(const Stat& o) {
    n += o.n;
    sum += o.sum;
    sum_sq += o.sum_sq;
  }
  double mean() const { return n > 0 ? sum / double(n) : 0.0; }
  // Sample standard deviation; 0 for fewer than two values.
  double stddev() const;
};

struct Aggregate {
  std::int64_t runs = 0;
  std::int64_t inquiry_successes = 0;
  std::int64_t page_successes = 0;
  Stat inquiry_slots;  // successful runs only
  Stat page_slots;
  Stat packets_lost;
  Stat buffer_drops;
  std::map<std::string, Stat> activity;  // per device name; runs with an empty window are skipped
  std::map<std::string, Stat> duty;

  void add(const RunMetrics& m);
  void merge(const Aggregate& o);
  double inquiry_success_fraction() const;
  double page_success_fraction() const;
};

// Throws std::invalid_argument on empty input.
Aggregate aggregate(const std::vector<RunMetrics>& runs);

}  // namespace btsim
