#pragma once

#include "lem/market.hpp"
#include "lem/model.hpp"
#include "lem/oracle.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lem::io {

namespace fs = std::filesystem;

/// Schema or cross-reference errors found while loading a scenario
/// directory. Each entry names the file and line where possible.
class ScenarioFormatError : public InputError {
 public:
  explicit ScenarioFormatError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// I/O failure (unreadable or unwritable path).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

/// Reads manifest.json and the CSV tables in `dir`, fills the hourly vectors
/// and validates. Throws ScenarioFormatError listing every problem found.
Scenario load_scenario(const fs::path& dir);

/// Writes the directory layout read by load_scenario.
void write_scenario(const Scenario& sc, const fs::path& dir);

/// Mode-independent view of a run, in the units of the emitted files.
struct RunReport {
  std::string mode;    // distributed | centralized | selfish
  std::string status;  // converged | iter_limit | solved
  int outer_iterations = 0;
  double base_mva = 1.0;
  int horizon = 0;
  double dt = 1.0;
  std::vector<int> bus_ids;
  market::Matrix dlmp;  // [bus][t] per-unit prices; empty when not priced
  std::vector<int> prosumer_ids;
  std::vector<prosumer::ProsumerSchedule> schedules;  // per-unit
  market::Matrix device_cost;                         // [a][t], currency
  std::vector<double> p_ug, p_loss;                   // per-unit
  market::AgentCosts costs;
  market::ConvergenceTrace trace;  // distributed only
  std::vector<std::string> messages;  // agent message log, when recorded
  std::vector<std::string> violations;
  std::string note;
};

RunReport make_report(const Scenario& sc, const market::ClearingResult& r);
RunReport make_report(const Scenario& sc, const oracle::OracleResult& r);

/// Writes dlmp.csv, schedules.csv, trace.csv and summary.json. Powers are in
/// MW, energies in MWh and prices in currency per MWh. These depend only on
/// the scenario and configuration. Wall-clock times of a distributed run go
/// to timing.csv, kept apart so the other files stay byte-identical.
void emit_results(const RunReport& report, const fs::path& dir);

}  // namespace lem::io
