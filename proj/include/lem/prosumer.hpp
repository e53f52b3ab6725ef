#pragma once

#include "lem/miqp.hpp"
#include "lem/model.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace lem::prosumer {

using Matrix = std::vector<std::vector<double>>;  // [device][t]

/// Signals received from the LMO plus the local step length.
struct ProsumerInput {
  std::vector<double> lambda_lem;  // price per unit energy
  std::vector<double> p_tilde;
  std::vector<double> lambda_p;
  double rho = 0.0;
  double dt = 1.0;

  /// Zero multipliers and consensus weight, price passthrough.
  static ProsumerInput priced(const std::vector<double>& price, double dt);
};

struct StorageSchedule {
  std::vector<double> p_ch, p_dch, x_ch, x_dch, soc;
};

struct FlSchedule {
  std::vector<double> p_fl;  // signed: positive reduces consumption
  std::vector<double> y_fl;
};

struct ProsumerSchedule {
  int prosumer_id = 0;
  std::vector<double> p_net, p_g, p_l;
  Matrix p_pv, q_pv;  // [unit][t]
  std::vector<StorageSchedule> storages;
  std::vector<FlSchedule> fls;
  double cost_energy = 0.0;
  double cost_devices = 0.0;
  double objective = 0.0;  // full subproblem objective incl. consensus terms
  double solver_objective = 0.0;
  int nodes = 0;
  double gap = 0.0;  // relative optimality gap of the binary solve
  bool fell_back = false;
};

/// Variable indices of the subproblem. Storage and FL entries outside their
/// window are -1.
struct SubproblemLayout {
  int T = 0;
  std::vector<int> p_net;
  std::vector<std::vector<int>> p_pv;
  struct StorageVars {
    std::vector<int> p_ch, p_dch, x_ch, x_dch, soc;
  };
  std::vector<StorageVars> storages;
  struct FlVars {
    std::vector<int> up, down, y;
  };
  std::vector<FlVars> fls;
};

struct Subproblem {
  miqp::MixedBinaryProgram program;
  SubproblemLayout layout;
};

/// Appends the prosumer's variables and constraints to `b`; binaries and
/// repair structure go to `meta` (its relaxation is left untouched).
SubproblemLayout append_prosumer(socp::ProgramBuilder& b, miqp::MixedBinaryProgram& meta, const Prosumer& pros,
                                 const ProsumerInput& input);

/// Builds the mixed-binary program. Throws InputError for inconsistent input
/// lengths and for statically infeasible devices (trip energy out of reach,
/// unreachable flexible-load energy floor).
Subproblem build_subproblem(const Prosumer& pros, const ProsumerInput& input);

enum class SolveMode { Exact, RelaxRepair };

struct ProsumerOptions {
  SolveMode mode = SolveMode::Exact;
  // A repaired relaxation seeds the incumbent; it usually closes the gap at
  // the root.
  miqp::BnbOptions bnb = [] {
    miqp::BnbOptions o;
    o.repair_incumbent = true;
    return o;
  }();
};

class ProsumerSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ProsumerSchedule solve_subproblem_III(const Prosumer& pros, const ProsumerInput& input,
                                      const ProsumerOptions& opts = {});

/// Reads a schedule back out of a solution vector of the subproblem. Without
/// `round_binaries` fractional binaries of a relaxation are kept as they are.
ProsumerSchedule extract_schedule(const Prosumer& pros, const ProsumerInput& input, const SubproblemLayout& layout,
                                  const Eigen::VectorXd& x, bool round_binaries = true);

/// Objective recomputed from the schedule alone.
double subproblem_objective(const Prosumer& pros, const ProsumerInput& input, const ProsumerSchedule& sched);
double device_cost(const Prosumer& pros, const ProsumerSchedule& sched, double dt);

double soc_step(double soc_prev, double p_ch, double p_dch, const StorageDevice& dev, double dt);

struct ScheduleViolation {
  std::string constraint;  // "net", "pv", "exclusive", "window", "gate", "soc_step", "soc_bounds", "trip", "fl_bounds", "fl_count", "fl_energy", "binary"
  int device = -1;
  int t = -1;
  double value = 0.0;
  double limit = 0.0;
  std::string describe() const;
};

/// Re-checks every device constraint by direct arithmetic.
std::vector<ScheduleViolation> validate_schedule(const Prosumer& pros, const ProsumerSchedule& sched, double dt,
                                                 double tol = 1e-6);

/// Effective PV cap per hour: min(forecast, pf * inverter rating).
double pv_cap(const PvUnit& pv, int t);

}  // namespace lem::prosumer
