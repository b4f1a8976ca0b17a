// Built-in parameter sweeps and the sweep CSV format.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "btsim/engine.hpp"

namespace btsim {

struct Recipe {
  std::string id;
  std::string title;
  Scenario base;
  std::vector<std::string> columns;  // one per GridPoint::values entry
  std::vector<GridPoint> grid;
  int default_runs = 100;
  bool paired = true;
};

const std::vector<std::string>& recipe_ids();
std::optional<Recipe> make_recipe(const std::string& id);

// Template scenarios the recipes are built from.
Scenario inquiry_scenario(double ber);             // one inquirer, one scanner
Scenario piconet_setup_scenario(double ber);       // inquiry followed by page
Scenario connected_pair_scenario();                // setup, then a measured connection
Scenario piconet_scenario(int slaves);             // master pages several slaves
Scenario sniff_piconet_scenario();                 // three slaves, two put in sniff

std::vector<std::string> sweep_csv_header(const std::vector<std::string>& columns,
                                          const std::vector<std::string>& devices);

struct CsvMetadata {
  std::string source;  // recipe id or grid file
  std::uint64_t seed = 0;
  int runs = 0;
  bool paired = false;
};

// Metadata comment lines followed by the header row.
void write_sweep_csv_header(std::ostream& out, const CsvMetadata& meta, const std::vector<std::string>& columns,
                            const std::vector<std::string>& devices);
void write_sweep_csv_row(std::ostream& out, const PointResult& row, const std::vector<std::string>& devices);
inline constexpr const char* kTruncationMarker = "# truncated: sweep interrupted";

}  // namespace btsim
