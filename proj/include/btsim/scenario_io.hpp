// JSON scenario and grid files. The schema is documented in docs/scenario.md.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "btsim/engine.hpp"
#include "json.hpp"

namespace btsim {

inline constexpr int kScenarioSchemaVersion = 1;

// Malformed or invalid file: carries a field path and, for syntax errors, a
// line number (0 if unknown).
class ScenarioError : public std::runtime_error {
public:
  ScenarioError(std::string field, int line, const std::string& message);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

private:
  std::string field_;
  int line_;
};

// Parses JSON text; `origin` names the source in diagnostics.
nlohmann::json parse_json(const std::string& text, const std::string& origin);
nlohmann::json load_json(const std::string& path);

// Builds and validates a scenario. Unknown keys are rejected with a
// suggestion for the closest known key.
Scenario scenario_from_json(const nlohmann::json& doc);
Scenario load_scenario(const std::string& path);

// A grid file: a base scenario plus parameters addressed by JSON pointer.
// Points are the cartesian product of the parameter value lists, first
// parameter varying slowest.
struct GridFile {
  Scenario base;
  std::vector<std::string> columns;  // parameter pointers
  std::vector<GridPoint> points;
  bool paired = false;  // common random numbers across points
};
GridFile grid_from_json(const nlohmann::json& doc, const std::string& base_dir);
GridFile load_grid(const std::string& path);

// Closest candidate by edit distance, or "" if nothing is close.
std::string closest_match(const std::string& key, const std::vector<std::string>& candidates);

}  // namespace btsim
