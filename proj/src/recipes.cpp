#include "btsim/recipes.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "btsim/hopsel.hpp"
#include "btsim/rng.hpp"

namespace btsim {

namespace {

const BdAddr kMasterAddr{0x1A2B3C, 0x5D, 0x0001};
const BdAddr kSlaveAddrs[] = {
    {0x4D5E6F, 0x21, 0x0002},
    {0x70F1E2, 0x63, 0x0003},
    {0x2468AC, 0x97, 0x0004},
    {0x13579B, 0xC8, 0x0005},
};

DeviceSpec make_device(const std::string& name, const BdAddr& addr) {
  DeviceSpec d;
  d.config.name = name;
  d.config.addr = addr;
  return d;
}

TimedCommand at(double slot, CommandType type) {
  TimedCommand c;
  c.at_slot = slot;
  c.command.type = type;
  return c;
}

TimedCommand after(EventType event, int count, double slot, Command cmd) {
  TimedCommand c;
  c.at_slot = slot;
  c.command = cmd;
  c.after = Anchor{event, count};
  return c;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string ber_label(double ber) { return "ber=" + fmt(ber); }

const std::vector<double> kBerGrid = {0.0, 1.0 / 1000, 1.0 / 200, 1.0 / 100, 1.0 / 50, 1.0 / 30};
const std::vector<double> kFailureBerGrid = {0.0, 1.0 / 100, 1.0 / 70, 1.0 / 50, 1.0 / 40, 1.0 / 30, 1.0 / 20};

std::vector<GridPoint> ber_grid(const std::vector<double>& bers) {
  std::vector<GridPoint> g;
  for (const double ber : bers)
    g.push_back(GridPoint{ber_label(ber), {ber}, [ber](Scenario& sc) { sc.channel.ber = ber; }});
  return g;
}

constexpr std::int64_t kMeasureFrom = 200;   // slots after the connection is set up
constexpr std::int64_t kMeasureLen = 6000;

}  // namespace

Scenario inquiry_scenario(double ber) {
  Scenario sc;
  sc.name = "inquiry";
  sc.channel.ber = ber;
  DeviceSpec m = make_device("master", kMasterAddr);
  m.commands.push_back(at(0, CommandType::EnableInquiry));
  DeviceSpec s = make_device("slave1", kSlaveAddrs[0]);
  s.commands.push_back(at(0, CommandType::EnableInquiryScan));
  sc.devices = {m, s};
  sc.duration_slots = m.config.timeouts.inquiry_timeout + 16;
  sc.stop = StopSpec{{EventType::InquiryComplete, EventType::InquiryFailed}, 1};
  sc.record_trace = false;
  return sc;
}

Scenario piconet_setup_scenario(double ber) {
  Scenario sc = inquiry_scenario(ber);
  sc.name = "piconet-setup";
  sc.devices[0].config.auto_page = true;
  sc.devices[1].config.page_scan_after_inquiry = true;
  const auto& t = sc.devices[0].config.timeouts;
  sc.duration_slots = t.inquiry_timeout + t.page_timeout + 64;
  sc.stop = StopSpec{{EventType::PageComplete, EventType::PageFailed, EventType::InquiryFailed}, 1};
  return sc;
}

Scenario connected_pair_scenario() {
  Scenario sc = piconet_setup_scenario(0.0);
  sc.name = "connected-pair";
  sc.stop.reset();
  sc.measure.after = Anchor{EventType::PageComplete, 1};
  sc.measure.from_slot = kMeasureFrom;
  sc.measure.to_slot = kMeasureFrom + kMeasureLen;
  sc.duration_slots = sc.devices[0].config.timeouts.inquiry_timeout + 400 + kMeasureFrom + kMeasureLen;
  return sc;
}

Scenario piconet_scenario(int slaves) {
  Scenario sc;
  sc.name = "piconet-" + std::to_string(slaves);
  DeviceSpec m = make_device("master", kMasterAddr);
  m.config.auto_page = true;
  m.config.inquiry_responses = slaves;
  m.commands.push_back(at(0, CommandType::EnableInquiry));
  sc.devices.push_back(m);
  for (int i = 0; i < slaves; ++i) {
    DeviceSpec s = make_device("slave" + std::to_string(i + 1), kSlaveAddrs[i]);
    s.config.page_scan_after_inquiry = true;
    s.commands.push_back(at(0, CommandType::EnableInquiryScan));
    sc.devices.push_back(s);
  }
  sc.duration_slots = 6000;
  return sc;
}

Scenario sniff_piconet_scenario() {
  Scenario sc = piconet_scenario(3);
  sc.name = "sniff-piconet";
  for (int i = 1; i <= 3; ++i) sc.traffic.push_back(TrafficSpec{"master", "slave" + std::to_string(i), 50});
  for (int i = 2; i <= 3; ++i) {
    Command c;
    c.type = CommandType::EnableSniff;
    c.target = sc.devices[std::size_t(i)].config.addr;
    c.interval = 40;
    c.attempt = 2;
    sc.devices[0].commands.push_back(after(EventType::PageComplete, 3, 20 * (i - 1), c));
  }
  sc.duration_slots = 8000;
  return sc;
}

const std::vector<std::string>& recipe_ids() {
  static const std::vector<std::string> ids = {"fig6", "fig7", "fig8", "fig10", "fig11", "fig12"};
  return ids;
}

std::optional<Recipe> make_recipe(const std::string& id) {
  Recipe r;
  r.id = id;
  if (id == "fig6") {
    r.title = "mean inquiry time versus BER";
    r.base = inquiry_scenario(0.0);
    r.columns = {"ber"};
    r.grid = ber_grid(kBerGrid);
    r.default_runs = 200;
  } else if (id == "fig7" || id == "fig8") {
    r.title = id == "fig7" ? "mean page time versus BER" : "piconet creation failure versus BER";
    r.base = piconet_setup_scenario(0.0);
    r.columns = {"ber"};
    r.grid = ber_grid(id == "fig7" ? kBerGrid : kFailureBerGrid);
    r.default_runs = 200;
  } else if (id == "fig10") {
    r.title = "master RF activity versus duty cycle";
    r.base = connected_pair_scenario();
    r.columns = {"period_slots"};
    for (const int period : {400, 200, 100, 50, 20, 10, 4, 2}) {
      r.grid.push_back(GridPoint{"period=" + std::to_string(period), {double(period)}, [period](Scenario& sc) {
                                   sc.traffic = {TrafficSpec{"master", "slave1", period}};
                                 }});
    }
    r.default_runs = 20;
  } else if (id == "fig11") {
    r.title = "slave RF activity versus T_sniff";
    r.base = connected_pair_scenario();
    r.base.traffic = {TrafficSpec{"master", "slave1", 100}};
    r.columns = {"t_sniff"};
    for (const int t_sniff : {0, 10, 20, 30, 40, 60, 80, 100, 150, 200}) {
      r.grid.push_back(GridPoint{t_sniff == 0 ? "active" : "t_sniff=" + std::to_string(t_sniff),
                                 {double(t_sniff)}, [t_sniff](Scenario& sc) {
                                   if (t_sniff == 0) return;
                                   Command c;
                                   c.type = CommandType::EnableSniff;
                                   c.target = sc.devices[1].config.addr;
                                   c.interval = std::uint32_t(t_sniff);
                                   c.attempt = 2;
                                   sc.devices[0].commands.push_back(after(EventType::PageComplete, 1, 20, c));
                                 }});
    }
    r.default_runs = 50;
  } else if (id == "fig12") {
    r.title = "slave RF activity versus T_hold";
    r.base = connected_pair_scenario();
    r.columns = {"t_hold"};
    for (const int t_hold : {0, 40, 60, 80, 100, 120, 140, 160, 200, 300, 400}) {
      r.grid.push_back(GridPoint{t_hold == 0 ? "active" : "t_hold=" + std::to_string(t_hold),
                                 {double(t_hold)}, [t_hold](Scenario& sc) {
                                   if (t_hold == 0) return;
                                   Command c;
                                   c.type = CommandType::EnableHold;
                                   c.target = sc.devices[1].config.addr;
                                   c.interval = std::uint32_t(t_hold);
                                   c.repeat = true;
                                   sc.devices[0].commands.push_back(after(EventType::PageComplete, 1, 20, c));
                                 }});
    }
    r.default_runs = 20;
  } else {
    return std::nullopt;
  }
  return r;
}

std::vector<std::string> sweep_csv_header(const std::vector<std::string>& columns,
                                          const std::vector<std::string>& devices) {
  std::vector<std::string> h = columns;
  for (const char* c : {"runs", "inquiry_success_fraction", "inquiry_slots_mean", "inquiry_slots_stddev",
                        "page_success_fraction", "page_slots_mean", "page_slots_stddev", "packets_lost_mean",
                        "buffer_drops_mean"})
    h.emplace_back(c);
  for (const auto& d : devices) {
    h.push_back(d + "_activity_mean");
    h.push_back(d + "_activity_stddev");
    h.push_back(d + "_duty_mean");
  }
  return h;
}

void write_sweep_csv_header(std::ostream& out, const CsvMetadata& meta, const std::vector<std::string>& columns,
                            const std::vector<std::string>& devices) {
  out << "# source=" << meta.source << " seed=" << meta.seed << " runs=" << meta.runs
      << " seeds=" << (meta.paired ? "paired" : "independent") << " schema_version=" << kSchemaVersion
      << " rng=" << kRngId << " hop_kernel=" << kHopKernelId << '\n';
  const auto h = sweep_csv_header(columns, devices);
  for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
  out << '\n';
}

void write_sweep_csv_row(std::ostream& out, const PointResult& row, const std::vector<std::string>& devices) {
  const Aggregate& a = row.aggregate;
  std::vector<std::string> f;
  for (const double v : row.point.values) f.push_back(fmt(v));
  auto mean = [](const Stat& s) { return s.n > 0 ? fmt(s.mean()) : std::string(); };
  auto sd = [](const Stat& s) { return s.n > 0 ? fmt(s.stddev()) : std::string(); };
  f.push_back(std::to_string(a.runs));
  f.push_back(fmt(a.inquiry_success_fraction()));
  f.push_back(mean(a.inquiry_slots));
  f.push_back(sd(a.inquiry_slots));
  f.push_back(fmt(a.page_success_fraction()));
  f.push_back(mean(a.page_slots));
  f.push_back(sd(a.page_slots));
  f.push_back(mean(a.packets_lost));
  f.push_back(mean(a.buffer_drops));
  for (const auto& d : devices) {
    const auto act = a.activity.find(d);
    const auto duty = a.duty.find(d);
    f.push_back(act != a.activity.end() ? mean(act->second) : "");
    f.push_back(act != a.activity.end() ? sd(act->second) : "");
    f.push_back(duty != a.duty.end() ? mean(duty->second) : "");
  }
  for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
  out << '\n';
}

}  // namespace btsim
