#pragma once

#include "lem/socp.hpp"

#include <vector>

namespace lem::miqp {

/// A binary b that enables a continuous variable p (p <= cap * b somewhere in
/// the relaxation). Repair rounds b up whenever p carries flow.
struct Gate {
  int binary = -1;
  int power = -1;
};

/// At most one of the two binaries may be 1 (charge vs discharge).
struct ExclusivePair {
  int a = -1;
  int b = -1;
};

/// sum of the listed binaries <= limit.
struct Cardinality {
  std::vector<int> binaries;
  int limit = 0;
};

struct MixedBinaryProgram {
  socp::ConicProgram relaxation;  // binaries relaxed to [0, 1]
  std::vector<int> binary_indices;

  // Structure used by relax_and_repair; B&B ignores it.
  std::vector<Gate> gates;
  std::vector<ExclusivePair> exclusive;
  std::vector<Cardinality> cardinality;
};

struct BnbOptions {
  double mip_gap = 1e-6;
  int node_limit = 50000;
  double int_tol = 1e-6;
  socp::SolverOptions lp;
  // Nodes evaluated per round. The sequence of rounds depends only on this
  // value, so results are independent of `threads`.
  int batch = 1;
  int threads = 1;
  bool repair_incumbent = false;  // seed the incumbent with relax_and_repair
};

struct BnbResult {
  socp::SolveStatus status = socp::SolveStatus::IterLimit;
  Eigen::VectorXd x;  // incumbent, binaries exactly 0/1
  double obj = 0.0;
  double bound = 0.0;  // best proven lower bound
  double gap = 0.0;    // |bound - obj| / (1 + |obj|)
  int nodes = 0;
  bool has_incumbent = false;
};

/// Throws InputError when a binary index is outside a NonNeg block or
/// mip_gap <= 0.
BnbResult solve_mbp(const MixedBinaryProgram& prob, const BnbOptions& opts = {});

struct RepairResult {
  socp::SolveStatus status = socp::SolveStatus::IterLimit;
  Eigen::VectorXd x;
  double obj = 0.0;
  double relaxed_obj = 0.0;
  bool fell_back = false;  // repair was infeasible and B&B produced x
  int nodes = 0;           // B&B nodes when fell_back
};

/// Continuous relaxation, rounding (0.5 threshold, gated flow forces 1),
/// netting of exclusive pairs, cardinality trimming, then a re-solve with all
/// binaries fixed. Falls back to solve_mbp when the repaired point is
/// infeasible.
RepairResult relax_and_repair(const MixedBinaryProgram& prob, const BnbOptions& fallback = {});

/// Binary assignment obtained by the repair rules from a relaxed point.
std::vector<double> repair_assignment(const MixedBinaryProgram& prob, const Eigen::VectorXd& relaxed,
                                      double tol = 1e-6);

}  // namespace lem::miqp
