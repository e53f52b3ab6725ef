#include "lem/miqp.hpp"

#include "lem/model.hpp"
#include "lem/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>

namespace lem::miqp {

using Eigen::VectorXd;
using socp::SolveStatus;

namespace {

using Fixes = std::vector<std::pair<int, double>>;

struct NodeEval {
  SolveStatus status = SolveStatus::Infeasible;
  VectorXd x;
  double obj = 0.0;
};

NodeEval solve_fixed(const socp::ConicProgram& relax, const Fixes& fixes, const socp::SolverOptions& lp) {
  NodeEval ev;
  const socp::ReducedProgram red = socp::fix_variables(relax, fixes);
  if (red.infeasible) return ev;
  const socp::ConicSolution sol = socp::solve_socp(red.program, lp);
  ev.status = sol.status;
  if (sol.status != SolveStatus::Optimal) return ev;
  ev.x = red.expand(sol.x);
  ev.obj = sol.obj;
  return ev;
}

void check_binaries(const MixedBinaryProgram& prob) {
  prob.relaxation.check();
  std::vector<socp::ConeKind> kind(prob.relaxation.n_vars);
  int at = 0;
  for (const auto& b : prob.relaxation.cones)
    for (int i = 0; i < b.size; ++i) kind[at++] = b.kind;
  for (int j : prob.binary_indices)
    if (j < 0 || j >= prob.relaxation.n_vars || kind[j] != socp::ConeKind::NonNeg)
      throw InputError("binary index " + std::to_string(j) + " not in a NonNeg block");
}

double rel_gap(double bound, double obj) { return std::abs(obj - bound) / (1.0 + std::abs(obj)); }

}  // namespace

std::vector<double> repair_assignment(const MixedBinaryProgram& prob, const VectorXd& relaxed, double tol) {
  std::map<int, double> val;  // binary variable -> assignment
  for (int j : prob.binary_indices) val[j] = relaxed[j] >= 0.5 ? 1.0 : 0.0;

  std::map<int, double> flow;  // binary -> gated continuous value
  for (const Gate& g : prob.gates) {
    const double p = relaxed[g.power];
    flow[g.binary] = std::max(flow[g.binary], p);
    if (p > tol) val[g.binary] = 1.0;
  }
  // Strength of a binary: its gated flow when known, else its relaxed value.
  auto strength = [&](int j) {
    auto it = flow.find(j);
    return it != flow.end() ? it->second : relaxed[j];
  };

  for (const ExclusivePair& e : prob.exclusive) {
    if (val[e.a] < 0.5 || val[e.b] < 0.5) continue;
    if (strength(e.b) > strength(e.a))
      val[e.a] = 0.0;
    else
      val[e.b] = 0.0;
  }

  for (const Cardinality& c : prob.cardinality) {
    std::vector<int> on;
    for (int j : c.binaries)
      if (val[j] > 0.5) on.push_back(j);
    if (static_cast<int>(on.size()) <= c.limit) continue;
    std::stable_sort(on.begin(), on.end(), [&](int a, int b) {
      const double sa = strength(a), sb = strength(b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    for (std::size_t k = static_cast<std::size_t>(std::max(c.limit, 0)); k < on.size(); ++k) val[on[k]] = 0.0;
  }

  std::vector<double> out;
  out.reserve(prob.binary_indices.size());
  for (int j : prob.binary_indices) out.push_back(val[j]);
  return out;
}

BnbResult solve_mbp(const MixedBinaryProgram& prob, const BnbOptions& opts) {
  if (!(opts.mip_gap > 0.0)) throw InputError("mip_gap must be positive");
  check_binaries(prob);
  std::vector<int> bins = prob.binary_indices;
  std::sort(bins.begin(), bins.end());
  bins.erase(std::unique(bins.begin(), bins.end()), bins.end());

  BnbResult res;
  const double inf = std::numeric_limits<double>::infinity();
  double inc_obj = inf;

  // Integral node: re-solve with every binary pinned to its rounded value so
  // the incumbent is exactly integral and feasible.
  auto offer = [&](const VectorXd& x) {
    Fixes all;
    for (int j : bins) all.emplace_back(j, std::round(x[j]));
    NodeEval ev = solve_fixed(prob.relaxation, all, opts.lp);
    if (ev.status != SolveStatus::Optimal) return;
    for (int j : bins) ev.x[j] = std::round(x[j]);
    if (ev.obj < inc_obj) {
      inc_obj = ev.obj;
      res.x = ev.x;
      res.obj = ev.obj;
      res.has_incumbent = true;
    }
  };
  // Most fractional binary, lowest index on ties; -1 when integral.
  auto branch_var = [&](const VectorXd& x) {
    int best = -1;
    double best_f = opts.int_tol;
    for (int j : bins) {
      const double f = std::min(x[j], 1.0 - x[j]);
      if (f > best_f) {
        best_f = f;
        best = j;
      }
    }
    return best;
  };

  NodeEval root = solve_fixed(prob.relaxation, {}, opts.lp);
  res.nodes = 1;
  if (root.status != SolveStatus::Optimal) {
    res.status = root.status;
    return res;
  }
  res.bound = root.obj;
  if (bins.empty()) {
    res.status = SolveStatus::Optimal;
    res.x = root.x;
    res.obj = root.obj;
    res.has_incumbent = true;
    return res;
  }

  if (opts.repair_incumbent) {
    const std::vector<double> a = repair_assignment(prob, root.x, opts.int_tol);
    Fixes all;
    for (std::size_t k = 0; k < prob.binary_indices.size(); ++k) all.emplace_back(prob.binary_indices[k], a[k]);
    NodeEval ev = solve_fixed(prob.relaxation, all, opts.lp);
    if (ev.status == SolveStatus::Optimal) {
      inc_obj = ev.obj;
      res.x = ev.x;
      res.obj = ev.obj;
      res.has_incumbent = true;
    }
  }

  struct Node {
    double bound;
    long id;
    Fixes fixes;
    VectorXd x;
  };
  // Best bound first; among equal bounds the newest node, so ties dive
  // instead of widening the tree.
  auto worse = [](const Node& a, const Node& b) {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id < b.id;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> open(worse);
  long next_id = 0;

  // Nodes dropped inside the gap tolerance still bound the optimum from below.
  double dropped_bound = inf;
  auto prunable = [&](double bound) {
    if (!(inc_obj < inf)) return false;
    if (bound >= inc_obj) return true;
    if (rel_gap(bound, inc_obj) > opts.mip_gap) return false;
    dropped_bound = std::min(dropped_bound, bound);
    return true;
  };

  if (branch_var(root.x) < 0)
    offer(root.x);
  else
    open.push({root.obj, next_id++, {}, root.x});

  const int batch = std::max(opts.batch, 1);
  while (!open.empty()) {
    if (prunable(open.top().bound)) break;
    if (res.nodes >= opts.node_limit) break;

    std::vector<Fixes> jobs;
    for (int k = 0; k < batch && !open.empty(); ++k) {
      Node nd = open.top();
      open.pop();
      if (prunable(nd.bound)) continue;
      const int j = branch_var(nd.x);
      for (double v : {0.0, 1.0}) {
        Fixes f = nd.fixes;
        f.emplace_back(j, v);
        jobs.push_back(std::move(f));
      }
    }
    std::vector<NodeEval> evals(jobs.size());
    parallel_for(jobs.size(), opts.threads,
                 [&](std::size_t i) { evals[i] = solve_fixed(prob.relaxation, jobs[i], opts.lp); });
    res.nodes += static_cast<int>(jobs.size());

    for (std::size_t i = 0; i < jobs.size(); ++i) {
      NodeEval& ev = evals[i];
      if (ev.status != SolveStatus::Optimal) continue;
      if (prunable(ev.obj)) continue;
      if (branch_var(ev.x) < 0)
        offer(ev.x);
      else
        open.push({ev.obj, next_id++, std::move(jobs[i]), std::move(ev.x)});
    }
  }

  const bool exhausted = open.empty() || prunable(open.top().bound);
  if (!res.has_incumbent) {
    res.status = exhausted ? SolveStatus::Infeasible : SolveStatus::IterLimit;
    res.bound = open.empty() ? inf : open.top().bound;
    return res;
  }
  res.bound = std::min({open.empty() ? inf : open.top().bound, dropped_bound, res.obj});
  res.gap = rel_gap(res.bound, res.obj);
  res.status = exhausted ? SolveStatus::Optimal : SolveStatus::IterLimit;
  return res;
}

RepairResult relax_and_repair(const MixedBinaryProgram& prob, const BnbOptions& fallback) {
  check_binaries(prob);
  RepairResult out;
  const socp::ConicSolution relaxed = socp::solve_socp(prob.relaxation, fallback.lp);
  if (relaxed.status != SolveStatus::Optimal) {
    out.status = relaxed.status;
    return out;
  }
  out.relaxed_obj = relaxed.obj;
  if (prob.binary_indices.empty()) {
    out.status = SolveStatus::Optimal;
    out.x = relaxed.x;
    out.obj = relaxed.obj;
    return out;
  }

  const std::vector<double> a = repair_assignment(prob, relaxed.x, fallback.int_tol);
  Fixes all;
  for (std::size_t k = 0; k < prob.binary_indices.size(); ++k) all.emplace_back(prob.binary_indices[k], a[k]);
  NodeEval ev = solve_fixed(prob.relaxation, all, fallback.lp);
  if (ev.status == SolveStatus::Optimal) {
    for (const auto& [j, v] : all) ev.x[j] = v;
    out.status = SolveStatus::Optimal;
    out.x = std::move(ev.x);
    out.obj = ev.obj;
    return out;
  }

  const BnbResult bnb = solve_mbp(prob, fallback);
  out.fell_back = true;
  out.nodes = bnb.nodes;
  out.status = bnb.has_incumbent ? SolveStatus::Optimal : bnb.status;
  out.x = bnb.x;
  out.obj = bnb.obj;
  return out;
}

}  // namespace lem::miqp
