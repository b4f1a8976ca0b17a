#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <sstream>

#include "btsim/engine.hpp"
#include "btsim/metrics.hpp"
#include "btsim/recipes.hpp"
#include "btsim/vcd.hpp"

using namespace btsim;

namespace {

// Minimal reader: scope/var names to identifiers, then per-identifier change
// lists as (time, value string).
struct Waves {
  std::map<std::string, std::string> id_of;  // "device.signal" -> identifier
  std::map<std::string, std::vector<std::pair<long long, std::string>>> changes;
  long long end = 0;

  const std::vector<std::pair<long long, std::string>>& of(const std::string& dev, const std::string& sig) const {
    return changes.at(id_of.at(dev + "." + sig));
  }
  std::string at(const std::string& dev, const std::string& sig, long long t) const {
    std::string v = "?";
    for (const auto& [ct, cv] : of(dev, sig)) {
      if (ct > t) break;
      v = cv;
    }
    return v;
  }
};

Waves read_waves(const std::string& text) {
  Waves w;
  std::istringstream in(text);
  std::string line, scope;
  bool body = false;
  long long now = 0;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string kw;
    ss >> kw;
    if (!body) {
      if (kw == "$scope") {
        std::string type;
        ss >> type >> scope;
      } else if (kw == "$var") {
        std::string type, width, id, name;
        ss >> type >> width >> id >> name;
        w.id_of[scope + "." + name] = id;
      } else if (kw == "$enddefinitions") {
        body = true;
      }
      continue;
    }
    if (line.empty() || line == "$dumpvars" || line == "$end") continue;
    if (line[0] == '#') {
      now = std::stoll(line.substr(1));
      w.end = now;
    } else if (line[0] == 'b') {
      const auto sp = line.find(' ');
      w.changes[line.substr(sp + 1)].emplace_back(now, line.substr(1, sp - 1));
    } else {
      w.changes[line.substr(1)].emplace_back(now, line.substr(0, 1));
    }
  }
  return w;
}

std::string vcd_text(const RunTrace& tr) {
  std::ostringstream out;
  write_vcd(out, tr);
  return out.str();
}

const RunResult& piconet() {
  static const RunResult r = [] {
    Scenario sc = piconet_scenario(3);
    sc.seed = 7;
    sc.duration_slots = 4000;
    sc.record_trace = true;
    return run(sc);
  }();
  return r;
}

VcdReport check(const std::string& text) {
  std::istringstream in(text);
  return check_vcd(in);
}

}  // namespace

TEST_CASE("written dumps pass the conformance check") {
  const std::string text = vcd_text(piconet().trace);
  const VcdReport r = check(text);
  CHECK_MESSAGE(r.ok, r.error);
  CHECK(r.signals == 4 * 4);
  CHECK(r.changes > 100);
  CHECK(r.last_time == piconet().trace.end_us);
}

TEST_CASE("dumped waveforms reproduce the trace samples") {
  const RunTrace& tr = piconet().trace;
  const Waves w = read_waves(vcd_text(tr));
  for (std::size_t d = 0; d < tr.device_names.size(); ++d) {
    const std::string& dev = tr.device_names[d];
    for (std::size_t i = 0; i < tr.samples[d].size(); i += 7) {
      const Sample& s = tr.samples[d][i];
      const long long t = s.t_us;
      REQUIRE(w.at(dev, "enable_rx_RF", t) == (s.rx ? "1" : "0"));
      REQUIRE(w.at(dev, "enable_tx_RF", t) == (s.tx ? "1" : "0"));
      REQUIRE(std::stoi(w.at(dev, "state", t), nullptr, 2) == int(s.state));
      const std::string ch = w.at(dev, "channel", t);
      if (s.channel < 0)
        REQUIRE(ch == "xxxxxxx");
      else
        REQUIRE(std::stoi(ch, nullptr, 2) == s.channel);
    }
  }
}

TEST_CASE("rx time integrated from the dump matches the activity metric") {
  const RunTrace& tr = piconet().trace;
  const Waves w = read_waves(vcd_text(tr));
  for (std::size_t d = 0; d < tr.device_names.size(); ++d) {
    long long on = 0, since = -1;
    for (const auto& [t, v] : w.of(tr.device_names[d], "enable_rx_RF")) {
      if (v == "1" && since < 0) since = t;
      if (v == "0" && since >= 0) {
        on += t - since;
        since = -1;
      }
    }
    for (const auto& [t, v] : w.of(tr.device_names[d], "enable_tx_RF")) {
      if (v == "1" && since < 0) since = t;
      if (v == "0" && since >= 0) {
        on += t - since;
        since = -1;
      }
    }
    if (since >= 0) on += tr.end_us - since;
    const DeviceActivity& a = piconet().metrics.devices[d];
    CHECK(on == doctest::Approx(double(a.rf_rx_us + a.rf_tx_us)).epsilon(1e-9));
  }
}

TEST_CASE("receiver is continuously on while in PageScan") {
  const RunTrace& tr = piconet().trace;
  const Waves w = read_waves(vcd_text(tr));
  const std::string page_scan = "0101";
  int intervals = 0;
  for (std::size_t d = 1; d < tr.device_names.size(); ++d) {
    const std::string& dev = tr.device_names[d];
    for (const auto& [t, v] : w.of(dev, "state")) {
      if (v != page_scan) continue;
      ++intervals;
      for (const auto& [rt, rv] : w.of(dev, "enable_rx_RF"))
        if (rt >= t && w.at(dev, "state", rt) == page_scan) CHECK(rv == "1");
      CHECK(w.at(dev, "enable_rx_RF", t) == "1");
    }
  }
  CHECK(intervals >= 3);
}

TEST_CASE("header carries seed and metadata") {
  const std::string text = vcd_text(piconet().trace);
  CHECK(text.find("seed 7") != std::string::npos);
  CHECK(text.find("schema_version 1") != std::string::npos);
  CHECK(text.find("$timescale 1 us $end") != std::string::npos);
}

TEST_CASE("conformance check rejects broken dumps") {
  const std::string head =
      "$timescale 1 us $end\n$scope module m $end\n$var wire 1 ! a $end\n$var wire 4 \" s $end\n$upscope $end\n"
      "$enddefinitions $end\n";
  CHECK(check(head + "#0\n1!\nb0101 \"\n#5\n0!\n").ok);
  CHECK_FALSE(check(head + "#0\n1%\n").ok);                // undeclared identifier
  CHECK_FALSE(check(head + "#5\n1!\n#5\n0!\n").ok);        // repeated timestamp
  CHECK_FALSE(check(head + "#0\nb10101 \"\n").ok);         // too wide
  CHECK_FALSE(check(head + "1!\n").ok);                    // change before any time
  CHECK_FALSE(check("$timescale 1 ns $end\n$enddefinitions $end\n").ok);
  CHECK_FALSE(check("$timescale 1 us $end\n$var wire 1 ! a $end\n").ok);  // no enddefinitions
  const VcdReport r = check(head + "#0\nq!\n");
  CHECK_FALSE(r.ok);
  CHECK(r.error.rfind("line 8", 0) == 0);
}
