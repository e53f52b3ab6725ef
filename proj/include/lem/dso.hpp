#pragma once

#include "lem/model.hpp"
#include "lem/socp.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace lem::dso {

/// Lines oriented away from the PCC.
struct RadialTopology {
  std::vector<std::size_t> line_from;    // parent-side bus index per line
  std::vector<std::size_t> line_to;      // child-side bus index per line
  std::vector<int> parent_line;          // per bus; -1 at the PCC
  std::vector<std::vector<int>> children;  // outgoing lines per bus
  std::size_t pcc = 0;
};

/// Throws InputError when the network fails validate_network.
RadialTopology orient(const NetworkModel& net);

/// Where the branch-flow model lives inside a conic program.
struct BranchFlowLayout {
  std::vector<int> p, q, l;  // per line: sending-end flows and squared current
  std::vector<int> v;        // per bus: squared voltage
  int p_ug = -1, q_ug = -1, p_loss = -1;
  std::vector<int> row_p_balance, row_q_balance;  // per bus
  std::vector<int> row_drop;                      // per line
  int row_loss = -1;
  int row_pcc_voltage = -1;
  int n_cones = 0;  // second-order blocks

  std::size_t n_buses() const { return v.size(); }
  std::size_t n_lines() const { return p.size(); }
  /// Variables of the physical model (flows, currents, voltages, upstream
  /// exchange and losses), excluding cone lifting and bound slacks.
  int n_model_vars() const { return static_cast<int>(3 * n_lines() + n_buses() + 3); }
  /// Active balances, voltage drops and the loss definition.
  int n_core_equalities() const { return static_cast<int>(n_buses() + n_lines() + 1); }
};

/// Appends one hour of the DistFlow model. Each bus balance row reads
///   inflow - r*l(inflow) - outflows = p_node[n]
/// (at the PCC the inflow is p_ug), so its dual is the marginal objective per
/// unit of nodal consumption. Callers may add variable consumption terms with
/// ProgramBuilder::add_to_row(row, var, -1). The rotated cone v*l >= p^2+q^2
/// is stored as ||(2p, 2q, v-l)|| <= v+l. Without `enforce_limits` line
/// capacities and voltage bounds are dropped (v >= 0 remains).
BranchFlowLayout add_branch_flow(socp::ProgramBuilder& b, const NetworkModel& net, const RadialTopology& topo,
                                 const std::vector<double>& p_node, const std::vector<double>& q_node,
                                 bool enforce_limits = true);

struct DsoInput {
  std::vector<std::vector<double>> p_net_node;  // [bus index][t]
  std::vector<std::vector<double>> q_net_node;
  std::vector<double> p_loss_tilde;  // [t]
  std::vector<double> lambda_loss;   // [t]
  std::vector<double> loss_cost;     // [t], currency per unit energy
  double dt = 1.0;
  double rho_prime = 1.0;
};

struct LineFlow {
  double p = 0.0, q = 0.0, l = 0.0;
};

struct Violation {
  enum Kind { VoltageLow, VoltageHigh, LineLimit } kind = VoltageLow;
  int index = 0;  // bus or line index
  int t = 0;
  double value = 0.0;
  double limit = 0.0;
  std::string describe(const NetworkModel& net) const;
};

struct DsoOutput {
  std::vector<double> p_loss;                 // [t]
  std::vector<double> p_ug, q_ug;             // [t]
  std::vector<std::vector<double>> dlmp;      // [bus][t], currency per unit energy
  std::vector<std::vector<double>> v;         // [bus][t], squared voltage
  std::vector<std::vector<LineFlow>> flows;   // [line][t]
  std::vector<std::vector<double>> tightness;  // [line][t]: v_from*l - (p^2+q^2)
  std::vector<std::size_t> line_from;         // sending bus index per line
  std::vector<double> objective;              // [t], subproblem objective
  double loss_cost = 0.0;                     // sum_t C_t * p_loss_t * dt
  std::vector<Violation> violations;          // only when limits were relaxed
  bool limits_relaxed = false;
  int iterations = 0;                         // total IPM iterations
};

struct DsoOptions {
  // Prices are duals and need a tighter solve than primal quantities. Cones
  // of low-resistance lines carry small duals, so an interior iterate sits
  // about mu/dual off the cone boundary; 1e-11 keeps those lines tight.
  socp::SolverOptions solver{.tol = 1e-11};
  int threads = 1;
  bool enforce_limits = true;
};

class DsoInfeasible : public std::runtime_error {
 public:
  DsoInfeasible(const std::string& what, int hour) : std::runtime_error(what), hour_(hour) {}
  int hour() const { return hour_; }

 private:
  int hour_;
};

struct HourProgram {
  socp::ConicProgram program;
  BranchFlowLayout layout;
};

/// Subproblem II for hour t: loss cost plus the loss consensus terms.
HourProgram assemble_branch_flow(const NetworkModel& net, const DsoInput& in, int t, bool enforce_limits = true);

/// Solves every hour. Throws DsoInfeasible naming the hour and the limit a
/// limit-free solve violates.
DsoOutput solve_dso_subproblem(const NetworkModel& net, const DsoInput& in, const DsoOptions& opts = {});

/// Like solve_dso_subproblem but never throws on limit infeasibility:
/// re-solves without limits and lists the violations.
DsoOutput evaluate_network(const NetworkModel& net, const DsoInput& in, const DsoOptions& opts = {});

struct LooseLine {
  int line = 0;
  int t = 0;
  double residual = 0.0;
};

struct TightnessReport {
  double max_residual = 0.0;
  std::vector<LooseLine> loose;
  bool ok() const { return loose.empty(); }
};

/// Recomputes v_from*l - (p^2+q^2) from the reported flows and voltages.
TightnessReport check_tightness(const DsoOutput& out, double tol);

/// DsoInput with the loss consensus terms switched off (lambda = 0, tilde = 0,
/// rho' = 0) for evaluating a fixed dispatch at its loss cost.
DsoInput evaluation_input(const std::vector<std::vector<double>>& p_node, const std::vector<std::vector<double>>& q_node,
                          const std::vector<double>& loss_cost, double dt);

/// Per-bus tan(phi) used to derive reactive injections from active ones:
/// background q/p where a bus has background load, else the mean load power
/// factor of prosumers registered at the bus, else 0.
std::vector<double> reactive_ratio(const Scenario& sc);

/// q[n][t] = ratio[n] * p[n][t].
std::vector<std::vector<double>> reactive_injections(const std::vector<double>& ratio,
                                                     const std::vector<std::vector<double>>& p_node);

}  // namespace lem::dso
