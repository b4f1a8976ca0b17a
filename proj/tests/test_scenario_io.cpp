#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "btsim/recipes.hpp"
#include "btsim/scenario_io.hpp"

using namespace btsim;
using nlohmann::json;

namespace {

const std::string kScenarios = std::string(BTSIM_SOURCE_DIR) + "/scenarios";

json minimal() {
  return json::parse(R"({
    "schema_version": 1,
    "duration_slots": 100,
    "devices": [
      {"name": "master", "addr": "0001:5D:1A2B3C", "commands": [{"at_slot": 0, "type": "EnableInquiry"}]},
      {"name": "slave1", "addr": "0002:21:4D5E6F", "commands": [{"at_slot": 0, "type": "EnableInquiryScan"}]}
    ]
  })");
}

ScenarioError error_of(const json& doc) {
  try {
    scenario_from_json(doc);
  } catch (const ScenarioError& e) {
    return e;
  }
  FAIL("expected a ScenarioError");
  return ScenarioError("", 0, "");
}

bool same_events(const RunResult& a, const RunResult& b) {
  if (a.trace.events.size() != b.trace.events.size()) return false;
  for (std::size_t i = 0; i < a.trace.events.size(); ++i) {
    const auto &x = a.trace.events[i], &y = b.trace.events[i];
    if (x.t_us != y.t_us || x.device != y.device || x.type != y.type || x.detail != y.detail) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("shipped scenarios load and validate") {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(kScenarios)) {
    if (entry.path().extension() != ".json") continue;
    const json doc = load_json(entry.path().string());
    INFO(entry.path().string());
    if (doc.contains("parameters"))
      CHECK_NOTHROW(load_grid(entry.path().string()));
    else
      CHECK_NOTHROW(load_scenario(entry.path().string()));
    ++count;
  }
  CHECK(count >= 2);
}

TEST_CASE("a minimal document fills in defaults") {
  const Scenario sc = scenario_from_json(minimal());
  REQUIRE(sc.devices.size() == 2);
  CHECK(sc.devices[0].config.name == "master");
  CHECK(sc.devices[1].config.addr == BdAddr{0x4D5E6F, 0x21, 2});
  CHECK(sc.devices[0].commands.size() == 1);
  CHECK(sc.duration_slots == 100);
  CHECK(sc.channel.ber == 0.0);
  CHECK(sc.devices[0].config.timeouts.inquiry_timeout == 2048);
}

TEST_CASE("the piconet file matches the programmatic piconet") {
  Scenario file = load_scenario(kScenarios + "/piconet_setup.json");
  Scenario code = piconet_scenario(3);
  code.seed = file.seed;
  code.duration_slots = file.duration_slots;
  file.record_trace = code.record_trace = true;
  CHECK(same_events(run(file), run(code)));
}

TEST_CASE("the sniff piconet file matches the programmatic one") {
  Scenario file = load_scenario(kScenarios + "/sniff_piconet.json");
  Scenario code = sniff_piconet_scenario();
  code.seed = file.seed;
  file.record_trace = code.record_trace = true;
  const RunResult a = run(file), b = run(code);
  CHECK(same_events(a, b));
  CHECK(a.metrics.devices[2].activity() < a.metrics.devices[1].activity());
}

TEST_CASE("fractions are accepted for rates") {
  json doc = minimal();
  doc["channel"] = {{"ber", "1/30"}};
  CHECK(scenario_from_json(doc).channel.ber == doctest::Approx(1.0 / 30.0));
  doc["channel"] = {{"ber", "1/0"}};
  CHECK(error_of(doc).field() == "channel.ber");
  doc["channel"] = {{"ber", 1.5}};
  CHECK(error_of(doc).field() == "channel.ber");
}

TEST_CASE("unknown keys are rejected with a suggestion") {
  json doc = minimal();
  doc["duraton_slots"] = 5;
  ScenarioError e = error_of(doc);
  CHECK(e.field() == "duraton_slots");
  CHECK(std::string(e.what()).find("did you mean 'duration_slots'") != std::string::npos);

  doc = minimal();
  doc["devices"][1]["page_scan_after_inqury"] = true;
  e = error_of(doc);
  CHECK(e.field() == "devices[1].page_scan_after_inqury");
  CHECK(std::string(e.what()).find("page_scan_after_inquiry") != std::string::npos);

  doc = minimal();
  doc["devices"][0]["commands"][0]["type"] = "EnableInqury";
  e = error_of(doc);
  CHECK(e.field() == "devices[0].commands[0].type");
  CHECK(std::string(e.what()).find("EnableInquiry") != std::string::npos);
}

TEST_CASE("validation errors carry the field path") {
  json doc = minimal();
  doc["devices"][1]["addr"] = "0001:5D:1A2B3C";
  ScenarioError e = error_of(doc);
  CHECK(e.field() == "devices[1].addr");
  CHECK(std::string(e.what()).find("duplicate BdAddr") != std::string::npos);

  doc = minimal();
  doc.erase("schema_version");
  CHECK(error_of(doc).field() == "schema_version");
  doc = minimal();
  doc["schema_version"] = 2;
  CHECK(error_of(doc).field() == "schema_version");
  doc = minimal();
  doc["devices"][0]["addr"] = "zz";
  CHECK(error_of(doc).field() == "devices[0].addr");
  doc = minimal();
  doc["devices"][0]["commands"][0]["at_slot"] = -1;
  CHECK(error_of(doc).field() == "devices[0].commands[0].at_slot");
  doc = minimal();
  doc["traffic"] = json::array({{{"source", "master"}, {"dest", "nobody"}}});
  CHECK(error_of(doc).field() == "traffic[0].dest");
}

TEST_CASE("syntax errors report a line number") {
  const std::string text = "{\n  \"schema_version\": 1,\n  \"devices\": [,]\n}\n";
  try {
    parse_json(text, "bad.json");
    FAIL("expected a syntax error");
  } catch (const ScenarioError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_json("/nonexistent/file.json"), ScenarioError);
}

TEST_CASE("grid points form the cartesian product, first parameter slowest") {
  json g = {{"schema_version", 1},
            {"scenario", minimal()},
            {"paired", true},
            {"parameters",
             json::array({{{"path", "/channel/ber"}, {"values", json::array({0, "1/100", 0.02})}},
                          {{"path", "/devices/1/inquiry_scan_interval"}, {"values", json::array({1024, 2048})}}})}};
  const GridFile grid = grid_from_json(g, ".");
  CHECK(grid.paired);
  CHECK(grid.columns == std::vector<std::string>{"/channel/ber", "/devices/1/inquiry_scan_interval"});
  REQUIRE(grid.points.size() == 6);
  const double expected[6][2] = {{0, 1024}, {0, 2048}, {0.01, 1024}, {0.01, 2048}, {0.02, 1024}, {0.02, 2048}};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(grid.points[i].values[0] == doctest::Approx(expected[i][0]));
    CHECK(grid.points[i].values[1] == expected[i][1]);
    Scenario s = grid.base;
    s.seed = 99;
    grid.points[i].apply(s);
    CHECK(s.seed == 99);  // the sweep owns the seed
    CHECK(s.channel.ber == doctest::Approx(expected[i][0]));
    CHECK(s.devices[1].config.inquiry_scan_interval == int(expected[i][1]));
  }
  CHECK(grid.points[3].label == "/channel/ber=1/100 /devices/1/inquiry_scan_interval=2048");
}

TEST_CASE("grid errors") {
  json g = {{"schema_version", 1}, {"scenario", minimal()}, {"parameters", json::array()}};
  CHECK_THROWS_AS(grid_from_json(g, "."), ScenarioError);
  g["parameters"] = json::array({{{"path", "channel/ber"}, {"values", json::array({0})}}});
  CHECK_THROWS_AS(grid_from_json(g, "."), ScenarioError);
  g["parameters"] = json::array({{{"path", "/channel/ber"}, {"values", json::array({2.0})}}});
  CHECK_THROWS_AS(grid_from_json(g, "."), ScenarioError);
}

TEST_CASE("grid scenario may be a path relative to the grid file") {
  const auto dir = std::filesystem::temp_directory_path() / "btsim_grid_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "base.json") << minimal().dump();
  std::ofstream(dir / "grid.json") << json{{"schema_version", 1},
                                           {"scenario", "base.json"},
                                           {"parameters", json::array({{{"path", "/seed"}, {"values", {1, 2}}}})}}
                                          .dump();
  const GridFile g = load_grid((dir / "grid.json").string());
  CHECK(g.points.size() == 2);
  CHECK_FALSE(g.paired);
  std::filesystem::remove_all(dir);
}

TEST_CASE("closest match") {
  const std::vector<std::string> keys = {"duration_slots", "devices", "channel"};
  CHECK(closest_match("duraton_slots", keys) == "duration_slots");
  CHECK(closest_match("devise", keys) == "devices");
  CHECK(closest_match("zzzzzzzz", keys).empty());
  CHECK(closest_match("x", {}).empty());
}
