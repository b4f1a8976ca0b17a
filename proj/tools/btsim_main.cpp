#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "btsim/engine.hpp"
#include "btsim/recipes.hpp"
#include "btsim/scenario_io.hpp"
#include "btsim/vcd.hpp"

using namespace btsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitInterrupted = 130;

std::atomic<bool> g_interrupted{false};

void on_sigint(int) { g_interrupted.store(true); }

std::string known_recipes() {
  std::string s;
  for (const auto& id : recipe_ids()) s += (s.empty() ? "" : ", ") + id;
  return s;
}

std::vector<std::string> device_names(const Scenario& sc) {
  std::vector<std::string> v;
  for (const auto& d : sc.devices) v.push_back(d.config.name);
  return v;
}

// Opens `path` for writing, or returns stdout for "" and "-".
std::ostream* open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return &std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw ScenarioError("", 0, "cannot write '" + path + "'");
  return &file;
}

int cmd_run(const std::string& file, std::optional<std::uint64_t> seed, const std::string& vcd_path,
            const std::string& csv_path) {
  Scenario sc = load_scenario(file);
  if (seed) sc.seed = *seed;
  sc.record_trace = !vcd_path.empty();
  const RunResult res = run(sc);

  if (!vcd_path.empty()) {
    std::ofstream f;
    std::ostream* out = open_out(vcd_path, f);
    write_vcd(*out, res.trace);
  }
  PointResult row;
  row.point.label = "run";
  row.runs = {res.metrics};
  row.aggregate = aggregate(row.runs);
  const auto names = device_names(sc);
  {
    std::ofstream f;
    std::ostream* out = open_out(csv_path, f);
    write_sweep_csv_header(*out, CsvMetadata{file, sc.seed, 1, false}, {}, names);
    write_sweep_csv_row(*out, row, names);
  }
  if (!csv_path.empty() && csv_path != "-") {
    const auto& m = res.metrics;
    std::cout << "scenario " << sc.name << " seed " << sc.seed << " ran " << res.trace.end_us << " us\n";
    if (m.inquiry_slots) std::cout << "inquiry_slots " << *m.inquiry_slots << '\n';
    if (m.page_slots) std::cout << "page_slots " << *m.page_slots << '\n';
    for (const auto& d : m.devices) std::cout << d.name << " rf_activity " << d.activity() << '\n';
  }
  return kExitOk;
}

int cmd_sweep(const std::string& what, int runs, std::uint64_t seed, const std::string& csv_path, int threads,
              std::optional<bool> paired_flag) {
  if (runs < 1) {
    std::cerr << "error: --runs must be at least 1\n";
    return kExitBadInput;
  }
  Scenario base;
  std::vector<std::string> columns;
  std::vector<GridPoint> grid;
  bool paired = false;
  const bool is_file = what.find(".json") != std::string::npos || std::filesystem::exists(what);
  if (is_file) {
    GridFile g = load_grid(what);
    base = std::move(g.base);
    columns = std::move(g.columns);
    grid = std::move(g.points);
    paired = g.paired;
  } else {
    auto r = make_recipe(what);
    if (!r) {
      std::cerr << "error: unknown recipe '" << what << "'; known recipes: " << known_recipes() << '\n';
      return kExitBadInput;
    }
    base = std::move(r->base);
    columns = std::move(r->columns);
    grid = std::move(r->grid);
    paired = r->paired;
  }
  if (paired_flag) paired = *paired_flag;

  SweepOptions opt;
  opt.runs = runs;
  opt.seed = seed;
  opt.threads = threads;
  opt.paired = paired;
  opt.cancel = &g_interrupted;
  opt.progress = [](std::size_t done, std::size_t total) {
    std::cerr << "\rruns " << done << "/" << total << std::flush;
    if (done == total) std::cerr << '\n';
  };
  std::signal(SIGINT, on_sigint);
  const auto results = monte_carlo(base, grid, opt);

  const auto names = device_names(base);
  std::ofstream f;
  std::ostream* out = open_out(csv_path, f);
  write_sweep_csv_header(*out, CsvMetadata{what, seed, runs, paired}, columns, names);
  for (const auto& row : results) write_sweep_csv_row(*out, row, names);
  if (results.size() < grid.size()) {
    *out << kTruncationMarker << '\n';
    out->flush();
    std::cerr << "\ninterrupted: " << results.size() << " of " << grid.size() << " points written\n";
    return kExitInterrupted;
  }
  return kExitOk;
}

int cmd_validate(const std::string& file) {
  const Scenario sc = load_scenario(file);
  std::cout << "ok: " << file << " (" << sc.devices.size() << " devices, " << sc.duration_slots << " slots)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bluetooth baseband and link manager simulator"};
  app.require_subcommand(1);

  std::string run_file, vcd_path, csv_path;
  std::optional<std::uint64_t> run_seed;
  auto* run_cmd = app.add_subcommand("run", "Run one scenario");
  run_cmd->add_option("scenario", run_file, "Scenario file (JSON)")->required();
  run_cmd->add_option("--seed", run_seed, "Override the scenario seed");
  run_cmd->add_option("--vcd", vcd_path, "Write the signal trace as VCD");
  run_cmd->add_option("--csv", csv_path, "Write metrics CSV (default: stdout)");

  std::string sweep_what, sweep_csv;
  int sweep_runs = -1;
  std::uint64_t sweep_seed = 1;
  int sweep_threads = 0;
  bool force_paired = false, force_independent = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo sweep over a recipe or grid file");
  sweep_cmd->add_option("recipe", sweep_what, "Recipe id (" + known_recipes() + ") or grid file")->required();
  sweep_cmd->add_option("--runs", sweep_runs, "Runs per grid point (default: recipe default, or 100)");
  sweep_cmd->add_option("--seed", sweep_seed, "Master seed");
  sweep_cmd->add_option("--csv", sweep_csv, "Output CSV (default: stdout)");
  sweep_cmd->add_option("--threads", sweep_threads, "Worker threads (default: BTSIM_THREADS or all cores)");
  auto* paired_opt = sweep_cmd->add_flag("--paired", force_paired, "Share device and channel seeds across points");
  sweep_cmd->add_flag("--independent", force_independent, "Independent seeds per point and run")
      ->excludes(paired_opt);

  std::string validate_file;
  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario file without running it");
  validate_cmd->add_option("scenario", validate_file, "Scenario file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadInput;
  }

  try {
    if (*run_cmd) return cmd_run(run_file, run_seed, vcd_path, csv_path);
    if (*validate_cmd) return cmd_validate(validate_file);
    if (*sweep_cmd) {
      int runs = sweep_runs;
      if (runs < 0) {
        const auto r = make_recipe(sweep_what);
        runs = r ? r->default_runs : 100;
      }
      std::optional<bool> paired;
      if (force_paired) paired = true;
      if (force_independent) paired = false;
      return cmd_sweep(sweep_what, runs, sweep_seed, sweep_csv, sweep_threads, paired);
    }
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "runtime breach: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitBadInput;
}
