#pragma once

#include "lem/dso.hpp"
#include "lem/lmo.hpp"
#include "lem/model.hpp"
#include "lem/prosumer.hpp"

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace lem::market {

using Matrix = std::vector<std::vector<double>>;

// The only signals agents exchange. Anything else stays inside its agent.
struct LmoToProsumer {
  int prosumer = 0;
  std::vector<double> lambda_lem, p_tilde, lambda_p;
};
struct ProsumerToLmo {
  int prosumer = 0;
  std::vector<double> p_net;
};
struct LmoToDso {
  Matrix p_net_node;  // [bus][t]
  std::vector<double> p_loss_tilde, lambda_loss;
};
struct DsoToLmo {
  std::vector<double> p_loss;
  Matrix dlmp;  // [bus][t]
};

using AgentMessage = std::variant<LmoToProsumer, ProsumerToLmo, LmoToDso, DsoToLmo>;

/// One JSON object per message: {"type", "outer", "inner", <payload fields>}.
std::string serialize(const AgentMessage& msg, int outer, int inner);
/// Inverse of serialize. Throws InputError on unknown types or keys.
AgentMessage parse_message(const std::string& line);

struct InnerRecord {
  int outer = 0, inner = 0;
  double lambda_loss_change = 0.0;  // max_t |lambda_loss(k'+1) - lambda_loss(k')|
  double loss_residual = 0.0;       // max_t |p_loss_tilde - p_loss|
  double dso_objective = 0.0;
  double lmo_objective = 0.0;
  bool stop = false;
  double millis = 0.0;
};

struct OuterRecord {
  int outer = 0;
  double lambda_p_change = 0.0;     // max_{a,t} |lambda_p(k+1) - lambda_p(k)|
  double consensus_residual = 0.0;  // max_{a,t} |p_tilde - p_net|
  double prosumer_objective = 0.0;  // sum of subproblem objectives
  int inner_iterations = 0;
  double max_subproblem_gap = 0.0;  // worst prosumer optimality gap
  int subproblem_nodes = 0;         // B&B nodes over all prosumers
  bool stop = false;
  double millis_prosumers = 0.0;
  double millis = 0.0;
};

struct ConvergenceTrace {
  double eps1 = 0.0, eps2 = 0.0;
  std::vector<OuterRecord> outer;
  std::vector<InnerRecord> inner;
};

enum class Status { Converged, IterLimit };
std::string to_string(Status s);

struct AgentCosts {
  double lmo = 0.0;  // sum_t p_ug * lambda_wem * dt
  double dso = 0.0;  // sum_t p_loss * C_loss * dt
  std::vector<double> prosumers;  // energy at the final DLMP plus device costs
  double device_total = 0.0;
  double prosumer_average() const;
  /// LMO + DSO + device costs: the primal part of the joint objective.
  double social() const { return lmo + dso + device_total; }
};

struct ClearingResult {
  Status status = Status::IterLimit;
  int outer_iterations = 0;
  double base_mva = 1.0;   // quantities below are per-unit
  Matrix dlmp;             // [bus][t], currency per per-unit energy
  std::vector<prosumer::ProsumerSchedule> schedules;  // by prosumer order
  std::vector<double> p_ug, p_loss, p_loss_tilde, lambda_loss;
  Matrix p_tilde, lambda_p;  // [a][t]
  Matrix p_net_node;         // [bus][t], incl. background
  dso::DsoOutput network;    // last DSO solve
  AgentCosts costs;
  ConvergenceTrace trace;
  std::vector<std::string> messages;  // when logging is enabled
};

struct ClearingOptions {
  prosumer::ProsumerOptions prosumer;
  dso::DsoOptions dso;
  int threads = 1;  // concurrent prosumer solves
  bool log_messages = false;
};

/// Subproblem failure during clearing; carries the trace up to the failure.
class ClearingError : public std::runtime_error {
 public:
  ClearingError(const std::string& what, ConvergenceTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const ConvergenceTrace& trace() const { return trace_; }

 private:
  ConvergenceTrace trace_;
};

/// Two-loop ADMM clearing. Physical scenarios are converted to per-unit first.
/// Throws InputError on invalid scenarios or configuration.
ClearingResult run_clearing(const Scenario& scenario, const ClearingOptions& opts = {});

/// Infinity norm of the residuals <= eps (inclusive). Throws InputError when
/// eps <= 0.
bool check_stop(const std::vector<double>& residual, double eps);

struct PrivacyReport {
  bool pass = true;
  std::vector<std::string> violations;  // "line N: field 'soc' not allowed in ProsumerToLmo"
  std::vector<std::string> warnings;
};

/// Checks every logged message against the closed message schema.
PrivacyReport audit_privacy(const std::vector<std::string>& log);

/// Recomputes agent costs from schedules, prices and network quantities.
AgentCosts compute_costs(const Scenario& pu_scenario, const std::vector<prosumer::ProsumerSchedule>& schedules,
                         const Matrix& dlmp, const std::vector<double>& p_ug, const std::vector<double>& p_loss);

/// Nodal net injections of prosumers plus background load.
Matrix nodal_injections(const Scenario& pu_scenario, const Matrix& p_net);

}  // namespace lem::market
