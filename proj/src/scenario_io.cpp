#include "btsim/scenario_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace btsim {

using nlohmann::json;

namespace {

std::string describe(const std::string& field, int line, const std::string& message) {
  std::string s;
  if (line > 0) s += "line " + std::to_string(line) + ": ";
  if (!field.empty()) s += field + ": ";
  return s + message;
}

[[noreturn]] void fail(const std::string& field, const std::string& message) {
  throw ScenarioError(field, 0, message);
}

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

void check_keys(const json& obj, const std::string& path, const std::vector<std::string>& known) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::find(known.begin(), known.end(), k) != known.end()) continue;
    std::string msg = "unknown key '" + k + "'";
    const std::string near = closest_match(k, known);
    if (!near.empty()) msg += "; did you mean '" + near + "'?";
    fail(join(path, k), msg);
  }
}

std::int64_t get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<std::int64_t>();
}

int get_int32(const json& v, const std::string& path) {
  const std::int64_t x = get_int(v, path);
  if (x < INT32_MIN || x > INT32_MAX) fail(path, "integer out of range");
  return int(x);
}

std::uint64_t get_u64(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return std::uint64_t(v.get<std::int64_t>());
  fail(path, "expected a non-negative integer");
}

// Numbers, or fractions written as "a/b".
double get_number(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    const auto slash = s.find('/');
    try {
      std::size_t used = 0;
      if (slash == std::string::npos) {
        const double x = std::stod(s, &used);
        if (used == s.size()) return x;
      } else {
        const double a = std::stod(s.substr(0, slash), &used);
        if (used == slash) {
          const std::string rest = s.substr(slash + 1);
          const double b = std::stod(rest, &used);
          if (used == rest.size() && b != 0) return a / b;
        }
      }
    } catch (const std::exception&) {
    }
  }
  fail(path, "expected a number or a fraction such as \"1/30\"");
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

using Setter = std::function<void(DeviceConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& device_setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto int_field = [&t](const char* key, int DeviceConfig::*m) {
      t[key] = [m](DeviceConfig& c, const json& v, const std::string& p) { c.*m = get_int32(v, p); };
    };
    auto bool_field = [&t](const char* key, bool DeviceConfig::*m) {
      t[key] = [m](DeviceConfig& c, const json& v, const std::string& p) { c.*m = get_bool(v, p); };
    };
    auto timeout_field = [&t](const char* key, std::int64_t Timeouts::*m) {
      t[key] = [m](DeviceConfig& c, const json& v, const std::string& p) { c.timeouts.*m = get_int(v, p); };
    };
    int_field("listen_window_us", &DeviceConfig::listen_window_us);
    int_field("sniff_listen_us", &DeviceConfig::sniff_listen_us);
    int_field("hold_resync_guard_us", &DeviceConfig::hold_resync_guard_us);
    int_field("inquiry_scan_interval", &DeviceConfig::inquiry_scan_interval);
    int_field("inquiry_scan_window", &DeviceConfig::inquiry_scan_window);
    int_field("backoff_max", &DeviceConfig::backoff_max);
    int_field("page_response_timeout", &DeviceConfig::page_response_timeout);
    int_field("new_connection_timeout", &DeviceConfig::new_connection_timeout);
    int_field("poll_interval", &DeviceConfig::poll_interval);
    int_field("buffer_capacity", &DeviceConfig::buffer_capacity);
    int_field("lmp_retries", &DeviceConfig::lmp_retries);
    int_field("inquiry_responses", &DeviceConfig::inquiry_responses);
    int_field("train_repetitions", &DeviceConfig::train_repetitions);
    int_field("sync_threshold", &DeviceConfig::sync_threshold);
    bool_field("interlaced_scan", &DeviceConfig::interlaced_scan);
    bool_field("auto_page", &DeviceConfig::auto_page);
    bool_field("page_scan_after_inquiry", &DeviceConfig::page_scan_after_inquiry);
    bool_field("record_packets", &DeviceConfig::record_packets);
    timeout_field("inquiry_timeout", &Timeouts::inquiry_timeout);
    timeout_field("page_timeout", &Timeouts::page_timeout);
    timeout_field("supervision_timeout", &Timeouts::supervision_timeout);
    return t;
  }();
  return table;
}

std::vector<std::string> setter_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : device_setters()) keys.push_back(k);
  return keys;
}

void apply_device_keys(DeviceConfig& c, const json& obj, const std::string& path,
                       const std::vector<std::string>& skip) {
  const auto& setters = device_setters();
  for (const auto& [k, v] : obj.items()) {
    if (std::find(skip.begin(), skip.end(), k) != skip.end()) continue;
    const auto it = setters.find(k);
    if (it != setters.end()) it->second(c, v, join(path, k));
  }
}

std::vector<std::string> event_names() {
  std::vector<std::string> v;
  for (int i = 0; i < kNumEventTypes; ++i) v.push_back(to_string(EventType(i)));
  return v;
}

std::vector<std::string> command_names() {
  std::vector<std::string> v;
  for (int i = 0; i <= int(CommandType::DetachReset); ++i) v.push_back(to_string(CommandType(i)));
  return v;
}

BdAddr parse_addr(const json& v, const std::string& path) {
  const std::string s = get_string(v, path);
  const auto a = BdAddr::parse(s);
  if (!a) fail(path, "expected an address of the form NNNN:UU:LLLLLL (hex), got '" + s + "'");
  return *a;
}

// Resolves a device name or an address literal.
BdAddr resolve_target(const json& v, const std::string& path, const std::map<std::string, BdAddr>& by_name) {
  const std::string s = get_string(v, path);
  const auto it = by_name.find(s);
  if (it != by_name.end()) return it->second;
  if (const auto a = BdAddr::parse(s)) return *a;
  std::vector<std::string> names;
  for (const auto& [k, a] : by_name) names.push_back(k);
  std::string msg = "unknown device '" + s + "'";
  const std::string near = closest_match(s, names);
  if (!near.empty()) msg += "; did you mean '" + near + "'?";
  fail(path, msg);
}

EventType parse_event(const json& v, const std::string& path) {
  const std::string name = get_string(v, path);
  const auto e = event_from_name(name);
  if (!e) {
    std::string msg = "unknown event '" + name + "'";
    const std::string near = closest_match(name, event_names());
    if (!near.empty()) msg += "; did you mean '" + near + "'?";
    fail(path, msg);
  }
  return *e;
}

Anchor parse_anchor(const json& obj, const std::string& path) {
  check_keys(obj, path, {"event", "count"});
  if (!obj.contains("event")) fail(join(path, "event"), "required");
  Anchor a;
  a.event = parse_event(obj["event"], join(path, "event"));
  if (obj.contains("count")) a.count = get_int32(obj["count"], join(path, "count"));
  return a;
}

TimedCommand parse_command(const json& obj, const std::string& path, const std::map<std::string, BdAddr>& by_name) {
  check_keys(obj, path, {"at_slot", "after", "type", "target", "interval", "attempt", "repeat"});
  if (!obj.contains("type")) fail(join(path, "type"), "required");
  TimedCommand tc;
  const std::string type = get_string(obj["type"], join(path, "type"));
  const auto ct = command_from_name(type);
  if (!ct) {
    std::string msg = "unknown command '" + type + "'";
    const std::string near = closest_match(type, command_names());
    if (!near.empty()) msg += "; did you mean '" + near + "'?";
    fail(join(path, "type"), msg);
  }
  tc.command.type = *ct;
  if (obj.contains("at_slot")) tc.at_slot = get_number(obj["at_slot"], join(path, "at_slot"));
  if (obj.contains("target")) tc.command.target = resolve_target(obj["target"], join(path, "target"), by_name);
  if (obj.contains("interval")) {
    const std::int64_t x = get_int(obj["interval"], join(path, "interval"));
    if (x < 0 || x > UINT32_MAX) fail(join(path, "interval"), "out of range");
    tc.command.interval = std::uint32_t(x);
  }
  if (obj.contains("attempt")) {
    const std::int64_t x = get_int(obj["attempt"], join(path, "attempt"));
    if (x < 0 || x > UINT32_MAX) fail(join(path, "attempt"), "out of range");
    tc.command.attempt = std::uint32_t(x);
  }
  if (obj.contains("after")) tc.after = parse_anchor(obj["after"], join(path, "after"));
  if (obj.contains("repeat")) tc.command.repeat = get_bool(obj["repeat"], join(path, "repeat"));
  return tc;
}

int levenshtein(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = int(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = int(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("", 0, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_value(const json& v) {
  if (v.is_number_float()) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v.get<double>();
    return ss.str();
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

}  // namespace

ScenarioError::ScenarioError(std::string field, int line, const std::string& message)
    : std::runtime_error(describe(field, line, message)), field_(std::move(field)), line_(line) {}

std::string closest_match(const std::string& key, const std::vector<std::string>& candidates) {
  std::string best;
  int best_d = INT32_MAX;
  for (const auto& c : candidates) {
    const int d = levenshtein(key, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  const int limit = std::max<int>(2, int(key.size()) / 3);
  return best_d <= limit ? best : "";
}

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + int(std::count(text.begin(), text.begin() + std::ptrdiff_t(byte > 0 ? byte - 1 : 0), '\n'));
    throw ScenarioError("", line, origin + ": JSON syntax error");
  }
}

json load_json(const std::string& path) { return parse_json(read_file(path), path); }

Scenario scenario_from_json(const json& doc) {
  check_keys(doc, "", {"schema_version", "name", "seed", "channel_seed", "duration_slots", "channel", "timeouts",
                       "defaults", "devices", "traffic", "stop", "measure", "record_trace"});
  if (!doc.contains("schema_version")) fail("schema_version", "required");
  if (get_int(doc["schema_version"], "schema_version") != kScenarioSchemaVersion)
    fail("schema_version", "unsupported version (expected " + std::to_string(kScenarioSchemaVersion) + ")");

  Scenario sc;
  if (doc.contains("name")) sc.name = get_string(doc["name"], "name");
  if (doc.contains("seed")) sc.seed = get_u64(doc["seed"], "seed");
  if (doc.contains("channel_seed")) sc.channel_seed = get_u64(doc["channel_seed"], "channel_seed");
  if (!doc.contains("duration_slots")) fail("duration_slots", "required");
  sc.duration_slots = get_int(doc["duration_slots"], "duration_slots");
  if (doc.contains("record_trace")) sc.record_trace = get_bool(doc["record_trace"], "record_trace");

  if (doc.contains("channel")) {
    const json& ch = doc["channel"];
    check_keys(ch, "channel", {"ber", "rf_delay_us", "rng_stream"});
    if (ch.contains("ber")) sc.channel.ber = get_number(ch["ber"], "channel.ber");
    if (ch.contains("rf_delay_us")) sc.channel.rf_delay_us = get_int32(ch["rf_delay_us"], "channel.rf_delay_us");
    if (ch.contains("rng_stream")) sc.channel.rng_stream = get_string(ch["rng_stream"], "channel.rng_stream");
  }

  DeviceConfig defaults;
  if (doc.contains("timeouts")) {
    check_keys(doc["timeouts"], "timeouts", {"inquiry_timeout", "page_timeout", "supervision_timeout"});
    apply_device_keys(defaults, doc["timeouts"], "timeouts", {});
  }
  if (doc.contains("defaults")) {
    check_keys(doc["defaults"], "defaults", setter_keys());
    apply_device_keys(defaults, doc["defaults"], "defaults", {});
  }

  if (!doc.contains("devices") || !doc["devices"].is_array()) fail("devices", "required array");
  const json& devs = doc["devices"];
  std::vector<std::string> device_keys = setter_keys();
  device_keys.insert(device_keys.end(), {"name", "addr", "commands"});
  std::map<std::string, BdAddr> by_name;
  for (std::size_t i = 0; i < devs.size(); ++i) {
    const std::string path = "devices[" + std::to_string(i) + "]";
    const json& d = devs[i];
    check_keys(d, path, device_keys);
    DeviceSpec dev;
    dev.config = defaults;
    if (!d.contains("name")) fail(join(path, "name"), "required");
    if (!d.contains("addr")) fail(join(path, "addr"), "required");
    dev.config.name = get_string(d["name"], join(path, "name"));
    dev.config.addr = parse_addr(d["addr"], join(path, "addr"));
    apply_device_keys(dev.config, d, path, {});
    by_name.emplace(dev.config.name, dev.config.addr);
    sc.devices.push_back(std::move(dev));
  }
  for (std::size_t i = 0; i < devs.size(); ++i) {
    const std::string path = "devices[" + std::to_string(i) + "].commands";
    if (!devs[i].contains("commands")) continue;
    const json& cmds = devs[i]["commands"];
    if (!cmds.is_array()) fail(path, "expected an array");
    for (std::size_t j = 0; j < cmds.size(); ++j)
      sc.devices[i].commands.push_back(parse_command(cmds[j], path + "[" + std::to_string(j) + "]", by_name));
  }

  if (doc.contains("traffic")) {
    const json& tr = doc["traffic"];
    if (!tr.is_array()) fail("traffic", "expected an array");
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const std::string path = "traffic[" + std::to_string(i) + "]";
      const json& t = tr[i];
      check_keys(t, path, {"source", "dest", "period_slots", "kind", "bytes", "start_slot"});
      TrafficSpec ts;
      if (!t.contains("source")) fail(join(path, "source"), "required");
      if (!t.contains("dest")) fail(join(path, "dest"), "required");
      ts.source = get_string(t["source"], join(path, "source"));
      ts.dest = get_string(t["dest"], join(path, "dest"));
      if (t.contains("period_slots")) ts.period_slots = get_int32(t["period_slots"], join(path, "period_slots"));
      if (t.contains("kind")) {
        const std::string k = get_string(t["kind"], join(path, "kind"));
        const auto kind = kind_from_name(k);
        if (!kind) fail(join(path, "kind"), "unknown packet kind '" + k + "'");
        ts.kind = *kind;
      }
      if (t.contains("bytes")) ts.bytes = get_int32(t["bytes"], join(path, "bytes"));
      if (t.contains("start_slot")) ts.start_slot = get_int(t["start_slot"], join(path, "start_slot"));
      sc.traffic.push_back(ts);
    }
  }

  if (doc.contains("stop")) {
    const json& st = doc["stop"];
    check_keys(st, "stop", {"events", "count"});
    StopSpec s;
    if (!st.contains("events") || !st["events"].is_array()) fail("stop.events", "required array");
    for (std::size_t i = 0; i < st["events"].size(); ++i) {
      const std::string path = "stop.events[" + std::to_string(i) + "]";
      s.events.push_back(parse_event(st["events"][i], path));
    }
    if (st.contains("count")) s.count = get_int32(st["count"], "stop.count");
    sc.stop = s;
  }

  if (doc.contains("measure")) {
    const json& m = doc["measure"];
    check_keys(m, "measure", {"from_slot", "to_slot", "after"});
    if (m.contains("after")) sc.measure.after = parse_anchor(m["after"], "measure.after");
    if (m.contains("from_slot")) sc.measure.from_slot = get_int(m["from_slot"], "measure.from_slot");
    if (m.contains("to_slot")) sc.measure.to_slot = get_int(m["to_slot"], "measure.to_slot");
  }

  try {
    validate(sc);
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    throw ScenarioError(e.field(), 0, what.substr(e.field().size() + 2));
  }
  return sc;
}

Scenario load_scenario(const std::string& path) { return scenario_from_json(load_json(path)); }

GridFile grid_from_json(const json& doc, const std::string& base_dir) {
  check_keys(doc, "", {"schema_version", "scenario", "parameters", "paired"});
  if (!doc.contains("schema_version")) fail("schema_version", "required");
  if (get_int(doc["schema_version"], "schema_version") != kScenarioSchemaVersion)
    fail("schema_version", "unsupported version (expected " + std::to_string(kScenarioSchemaVersion) + ")");
  if (!doc.contains("scenario")) fail("scenario", "required");
  json base = doc["scenario"];
  if (base.is_string()) {
    std::filesystem::path p = base.get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    base = load_json(p.string());
  }
  GridFile g;
  g.base = scenario_from_json(base);
  if (doc.contains("paired")) g.paired = get_bool(doc["paired"], "paired");

  if (!doc.contains("parameters") || !doc["parameters"].is_array()) fail("parameters", "required array");
  const json& params = doc["parameters"];
  if (params.empty()) fail("parameters", "grid must not be empty");
  std::vector<json::json_pointer> ptrs;
  std::vector<std::vector<json>> values;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string path = "parameters[" + std::to_string(i) + "]";
    check_keys(params[i], path, {"path", "values"});
    if (!params[i].contains("path")) fail(join(path, "path"), "required");
    const std::string ptr = get_string(params[i]["path"], join(path, "path"));
    json::json_pointer jp;
    try {
      jp = json::json_pointer(ptr);
    } catch (const json::exception&) {
      fail(join(path, "path"), "invalid JSON pointer '" + ptr + "'");
    }
    if (!params[i].contains("values") || !params[i]["values"].is_array() || params[i]["values"].empty())
      fail(join(path, "values"), "required non-empty array");
    ptrs.push_back(jp);
    values.push_back(params[i]["values"].get<std::vector<json>>());
    g.columns.push_back(ptr);
  }

  std::vector<std::size_t> idx(values.size(), 0);
  for (;;) {
    json patched = base;
    GridPoint pt;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const json& v = values[k][idx[k]];
      patched[ptrs[k]] = v;
      if (!pt.label.empty()) pt.label += " ";
      pt.label += g.columns[k] + "=" + format_value(v);
      pt.values.push_back(v.is_number() ? v.get<double>()
                          : v.is_string()  ? get_number(v, "parameters[" + std::to_string(k) + "].values")
                                           : 0.0);
    }
    Scenario sc;
    try {
      sc = scenario_from_json(patched);
    } catch (const ScenarioError& e) {
      throw ScenarioError(e.field(), 0, "grid point '" + pt.label + "': " + e.what());
    }
    pt.apply = [sc](Scenario& s) {
      const std::uint64_t seed = s.seed;
      s = sc;
      s.seed = seed;
    };
    g.points.push_back(std::move(pt));
    std::size_t k = values.size();
    while (k > 0) {
      --k;
      if (++idx[k] < values[k].size()) break;
      idx[k] = 0;
      if (k == 0) return g;
    }
  }
}

GridFile load_grid(const std::string& path) {
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return grid_from_json(load_json(path), dir);
}

}  // namespace btsim
