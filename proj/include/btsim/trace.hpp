#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btsim/baseband.hpp"

namespace btsim {

inline constexpr int kSchemaVersion = 1;

// Per-device signal value, recorded whenever any field changes.
struct Sample {
  std::int64_t t_us = 0;
  DeviceState state = DeviceState::Standby;
  bool tx = false;
  bool rx = false;
  int channel = -1;

  bool same_signals(const Sample& o) const {
    return state == o.state && tx == o.tx && rx == o.rx && channel == o.channel;
  }
};

struct RunMetadata {
  std::uint64_t seed = 0;
  int schema_version = kSchemaVersion;
  std::string rng_id;
  std::string hop_kernel;
  std::string scenario;
};

struct RunTrace {
  RunMetadata meta;
  std::vector<std::string> device_names;
  std::vector<std::vector<Sample>> samples;  // per device, starting at t = 0
  std::vector<Event> events;
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;  // exclusive
};

}  // namespace btsim
