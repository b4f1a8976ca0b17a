#include "btsim/vcd.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <vector>

namespace btsim {

namespace {

constexpr int kStateBits = 4;
constexpr int kChannelBits = 7;

std::string ident(int n) {
  std::string s;
  do {
    s += char('!' + n % 94);
    n /= 94;
  } while (n > 0);
  return s;
}

std::string bits(int value, int width) {
  if (value < 0) return std::string(std::size_t(width), 'x');
  std::string s(std::size_t(width), '0');
  for (int i = 0; i < width; ++i)
    if (value >> i & 1) s[std::size_t(width - 1 - i)] = '1';
  return s;
}

std::string sanitize(const std::string& name) {
  std::string s = name;
  for (char& c : s)
    if (c == ' ' || c == '\t' || c == '$') c = '_';
  return s.empty() ? "_" : s;
}

struct DeviceIds {
  std::string state, rx, tx, channel;
};

void emit(std::ostream& out, const DeviceIds& id, const Sample& s, const Sample* prev) {
  if (!prev || prev->state != s.state) out << 'b' << bits(int(s.state), kStateBits) << ' ' << id.state << '\n';
  if (!prev || prev->rx != s.rx) out << (s.rx ? '1' : '0') << id.rx << '\n';
  if (!prev || prev->tx != s.tx) out << (s.tx ? '1' : '0') << id.tx << '\n';
  if (!prev || prev->channel != s.channel) out << 'b' << bits(s.channel, kChannelBits) << ' ' << id.channel << '\n';
}

}  // namespace

void write_vcd(std::ostream& out, const RunTrace& trace) {
  out << "$comment\n  seed " << trace.meta.seed << "\n  schema_version " << trace.meta.schema_version << "\n  rng "
      << trace.meta.rng_id << "\n  hop_kernel " << trace.meta.hop_kernel << "\n  scenario " << trace.meta.scenario
      << "\n  state codes:";
  for (int i = 0; i < kNumDeviceStates; ++i) out << ' ' << i << '=' << to_string(DeviceState(i));
  out << "\n$end\n$version btsim $end\n$timescale 1 us $end\n";

  std::vector<DeviceIds> ids;
  out << "$scope module piconet $end\n";
  for (std::size_t d = 0; d < trace.device_names.size(); ++d) {
    const int base = int(d) * 4;
    ids.push_back({ident(base), ident(base + 1), ident(base + 2), ident(base + 3)});
    out << "$scope module " << sanitize(trace.device_names[d]) << " $end\n";
    out << "$var wire " << kStateBits << ' ' << ids[d].state << " state $end\n";
    out << "$var wire 1 " << ids[d].rx << " enable_rx_RF $end\n";
    out << "$var wire 1 " << ids[d].tx << " enable_tx_RF $end\n";
    out << "$var wire " << kChannelBits << ' ' << ids[d].channel << " channel $end\n";
    out << "$upscope $end\n";
  }
  out << "$upscope $end\n$enddefinitions $end\n";

  struct Change {
    std::int64_t t;
    std::size_t device, index;
  };
  std::vector<Change> changes;
  for (std::size_t d = 0; d < trace.samples.size() && d < ids.size(); ++d)
    for (std::size_t i = 0; i < trace.samples[d].size(); ++i) changes.push_back({trace.samples[d][i].t_us, d, i});
  std::stable_sort(changes.begin(), changes.end(), [](const Change& a, const Change& b) {
    return a.t != b.t ? a.t < b.t : a.device < b.device;
  });

  out << "#" << trace.start_us << "\n$dumpvars\n";
  std::vector<bool> seen(ids.size(), false);
  std::size_t k = 0;
  for (; k < changes.size() && changes[k].t <= trace.start_us; ++k) {
    const auto& c = changes[k];
    const auto& s = trace.samples[c.device];
    emit(out, ids[c.device], s[c.index], c.index > 0 ? &s[c.index - 1] : nullptr);
    seen[c.device] = true;
  }
  for (std::size_t d = 0; d < ids.size(); ++d)
    if (!seen[d]) emit(out, ids[d], Sample{}, nullptr);
  out << "$end\n";

  std::int64_t last = trace.start_us;
  for (; k < changes.size(); ++k) {
    const auto& c = changes[k];
    if (c.t != last) {
      out << '#' << c.t << '\n';
      last = c.t;
    }
    const auto& s = trace.samples[c.device];
    const Sample fallback{};
    emit(out, ids[c.device], s[c.index], c.index > 0 ? &s[c.index - 1] : (seen[c.device] ? nullptr : &fallback));
  }
  if (trace.end_us > last) out << '#' << trace.end_us << '\n';
}

VcdReport check_vcd(std::istream& in) {
  VcdReport r;
  auto bad = [&r](int line, const std::string& msg) {
    r.ok = false;
    r.error = "line " + std::to_string(line) + ": " + msg;
    return r;
  };
  std::map<std::string, int> widths;
  bool timescale = false, definitions_done = false, in_dumpvars = false;
  std::string line;
  int n = 0;
  std::string pending;  // multi-line header command
  int pending_line = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!definitions_done) {
      if (pending.empty()) pending_line = n;
      pending += line + " ";
      if (line.find("$end") == std::string::npos) continue;
      std::istringstream ss(pending);
      pending.clear();
      std::string kw;
      ss >> kw;
      if (kw == "$var") {
        std::string type, id, name;
        int width = 0;
        if (!(ss >> type >> width >> id >> name) || width <= 0) return bad(pending_line, "malformed $var");
        if (widths.count(id)) return bad(pending_line, "duplicate identifier " + id);
        widths[id] = width;
        ++r.signals;
      } else if (kw == "$timescale") {
        std::string a, b;
        ss >> a >> b;
        if (a != "1" || b != "us") return bad(pending_line, "timescale must be 1 us");
        timescale = true;
      } else if (kw == "$enddefinitions") {
        if (!timescale) return bad(pending_line, "missing $timescale");
        if (widths.empty()) return bad(pending_line, "no signals declared");
        definitions_done = true;
      } else if (kw != "$comment" && kw != "$version" && kw != "$date" && kw != "$scope" && kw != "$upscope") {
        return bad(pending_line, "unexpected header command " + kw);
      }
      continue;
    }
    if (line.empty()) continue;
    if (line[0] == '#') {
      long long t = 0;
      try {
        std::size_t used = 0;
        t = std::stoll(line.substr(1), &used);
        if (used + 1 != line.size()) return bad(n, "malformed timestamp");
      } catch (const std::exception&) {
        return bad(n, "malformed timestamp");
      }
      if (t <= r.last_time) return bad(n, "timestamps not strictly increasing");
      r.last_time = t;
      continue;
    }
    if (line == "$dumpvars") {
      in_dumpvars = true;
      continue;
    }
    if (line == "$end" && in_dumpvars) {
      in_dumpvars = false;
      continue;
    }
    if (r.last_time < 0) return bad(n, "value change before first timestamp");
    std::string id;
    int width = 1;
    if (line[0] == 'b' || line[0] == 'B') {
      const auto sp = line.find(' ');
      if (sp == std::string::npos) return bad(n, "malformed vector change");
      const std::string v = line.substr(1, sp - 1);
      if (v.empty() || v.find_first_not_of("01xXzZ") != std::string::npos) return bad(n, "bad vector value");
      width = int(v.size());
      id = line.substr(sp + 1);
    } else if (std::string("01xXzZ").find(line[0]) != std::string::npos) {
      id = line.substr(1);
    } else {
      return bad(n, "unrecognized line");
    }
    const auto it = widths.find(id);
    if (it == widths.end()) return bad(n, "undeclared identifier " + id);
    if (width > it->second) return bad(n, "value wider than declared");
    ++r.changes;
  }
  if (!definitions_done) return bad(n, "missing $enddefinitions");
  return r;
}

}  // namespace btsim
