#pragma once

#include "lem/dso.hpp"
#include "lem/market.hpp"
#include "lem/model.hpp"
#include "lem/prosumer.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace lem::oracle {

using Matrix = std::vector<std::vector<double>>;

enum class Mode { Centralized, Selfish };
std::string to_string(Mode m);

struct OracleResult {
  Mode mode = Mode::Centralized;
  double objective = 0.0;  // LMO + DSO + device costs
  double base_mva = 1.0;   // quantities below are per-unit
  Matrix dlmp;             // [bus][t]; Centralized only
  std::vector<prosumer::ProsumerSchedule> schedules;
  std::vector<double> p_ug, p_loss;
  Matrix p_net_node;
  market::AgentCosts costs;
  dso::DsoOutput network;  // Selfish: network evaluation at the selfish injections
  std::vector<dso::Violation> violations;  // Selfish: limits the injections break
  std::string note;        // modeling assumption behind the mode
  int iterations = 0;      // IPM iterations (Centralized)
};

struct CentralizedOptions {
  socp::SolverOptions solver{.tol = 1e-9};
  bool enforce_limits = true;
};

class OracleInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One joint conic program over all hours, network and prosumers. With
/// `fixed_from` every binary is pinned to the distributed schedule, else
/// binaries are relaxed to [0, 1]. Throws OracleInfeasible naming the
/// constraint family that cannot be met.
OracleResult solve_centralized(const Scenario& scenario, const market::ClearingResult* fixed_from = nullptr,
                               const CentralizedOptions& opts = {});

/// Every prosumer schedules against the wholesale price alone; the network is
/// then evaluated at the resulting injections and limit violations reported.
OracleResult solve_selfish(const Scenario& scenario, const prosumer::ProsumerOptions& popts = {},
                           const dso::DsoOptions& dopts = {}, int threads = 1);

}  // namespace lem::oracle
