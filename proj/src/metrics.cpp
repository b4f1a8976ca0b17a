#include "btsim/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace btsim {

const DeviceActivity* RunMetrics::device(const std::string& name) const {
  for (const auto& d : devices)
    if (d.name == name) return &d;
  return nullptr;
}

double rf_activity(const RunTrace& trace, int device, std::int64_t from_us, std::int64_t to_us) {
  if (to_us <= from_us) throw UndefinedWindow("rf_activity: empty window");
  if (from_us < trace.start_us || to_us > trace.end_us)
    throw UndefinedWindow("rf_activity: window outside the trace span");
  if (device < 0 || std::size_t(device) >= trace.samples.size())
    throw std::invalid_argument("rf_activity: unknown device index");
  const auto& s = trace.samples[std::size_t(device)];
  std::int64_t active = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::int64_t a = std::max(s[i].t_us, from_us);
    const std::int64_t b = std::min(i + 1 < s.size() ? s[i + 1].t_us : trace.end_us, to_us);
    if (b > a && (s[i].tx || s[i].rx)) active += b - a;
  }
  return double(active) / double(to_us - from_us);
}

double rf_activity(const RunTrace& trace, int device) {
  return rf_activity(trace, device, trace.start_us, trace.end_us);
}

double duty_cycle(const DeviceActivity& master) {
  const double available = double(master.total_us) / double(2 * kSlotUs);
  return available > 0 ? std::min(1.0, double(master.tx_slots) / available) : 0.0;
}

void PowerModel::validate() const {
  if (p_tx_mw < 0 || p_rx_mw < 0 || p_idle_mw < 0) throw std::invalid_argument("power: values must be >= 0");
  if (p_idle_mw > std::min(p_tx_mw, p_rx_mw))
    throw std::invalid_argument("power.p_idle_mw: must not exceed min(p_tx_mw, p_rx_mw)");
}

double energy_mj(const DeviceActivity& a, const PowerModel& model) {
  model.validate();
  const double idle_us = double(std::max<std::int64_t>(0, a.total_us - a.rf_tx_us - a.rf_rx_us));
  // mW x us = nJ; 1e6 nJ = 1 mJ.
  return (model.p_tx_mw * double(a.rf_tx_us) + model.p_rx_mw * double(a.rf_rx_us) + model.p_idle_mw * idle_us) /
         1e6;
}

double Stat::stddev() const {
  if (n < 2) return 0.0;
  const double var = (sum_sq - sum * sum / double(n)) / double(n - 1);
  return var > 0 ? std::sqrt(var) : 0.0;
}

void Aggregate::add(const RunMetrics& m) {
  ++runs;
  if (m.inquiry_success) {
    ++inquiry_successes;
    if (m.inquiry_slots) inquiry_slots.add(*m.inquiry_slots);
  }
  if (m.page_success) {
    ++page_successes;
    if (m.page_slots) page_slots.add(*m.page_slots);
  }
  packets_lost.add(double(m.packets_lost));
  buffer_drops.add(double(m.buffer_drops));
  for (const auto& d : m.devices) {
    if (d.total_us <= 0) continue;  // undefined window
    activity[d.name].add(d.activity());
    duty[d.name].add(duty_cycle(d));
  }
}

void Aggregate::merge(const Aggregate& o) {
  runs += o.runs;
  inquiry_successes += o.inquiry_successes;
  page_successes += o.page_successes;
  inquiry_slots.merge(o.inquiry_slots);
  page_slots.merge(o.page_slots);
  packets_lost.merge(o.packets_lost);
  buffer_drops.merge(o.buffer_drops);
  for (const auto& [k, v] : o.activity) activity[k].merge(v);
  for (const auto& [k, v] : o.duty) duty[k].merge(v);
}

double Aggregate::inquiry_success_fraction() const {
  return runs > 0 ? double(inquiry_successes) / double(runs) : 0.0;
}

double Aggregate::page_success_fraction() const {
  return runs > 0 ? double(page_successes) / double(runs) : 0.0;
}

Aggregate aggregate(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate: no runs");
  Aggregate a;
  for (const auto& m : runs) a.add(m);
  return a;
}

}  // namespace btsim
