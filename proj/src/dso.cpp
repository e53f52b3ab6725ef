#include "lem/dso.hpp"

#include "lem/parallel.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace lem::dso {

using socp::ConeKind;
using socp::ProgramBuilder;
using socp::SolveStatus;

RadialTopology orient(const NetworkModel& net) {
  const ValidationReport rep = validate_network(net);
  if (!rep.ok()) throw InputError("invalid network: " + rep.summary());
  const std::size_t nb = net.buses.size();
  const std::size_t nl = net.lines.size();
  RadialTopology topo;
  topo.pcc = net.pcc_index();
  topo.line_from.assign(nl, 0);
  topo.line_to.assign(nl, 0);
  topo.parent_line.assign(nb, -1);
  topo.children.assign(nb, {});

  std::vector<std::vector<int>> incident(nb);
  for (std::size_t f = 0; f < nl; ++f) {
    incident[net.bus_index(net.lines[f].from_bus)].push_back(static_cast<int>(f));
    incident[net.bus_index(net.lines[f].to_bus)].push_back(static_cast<int>(f));
  }
  std::vector<bool> seen(nb, false);
  std::deque<std::size_t> queue{topo.pcc};
  seen[topo.pcc] = true;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (int f : incident[u]) {
      const std::size_t a = net.bus_index(net.lines[f].from_bus);
      const std::size_t w = a == u ? net.bus_index(net.lines[f].to_bus) : a;
      if (seen[w]) continue;
      seen[w] = true;
      topo.line_from[f] = u;
      topo.line_to[f] = w;
      topo.parent_line[w] = f;
      topo.children[u].push_back(f);
      queue.push_back(w);
    }
  }
  return topo;
}

BranchFlowLayout add_branch_flow(ProgramBuilder& b, const NetworkModel& net, const RadialTopology& topo,
                                 const std::vector<double>& p_node, const std::vector<double>& q_node,
                                 bool enforce_limits) {
  const int nb = static_cast<int>(net.buses.size());
  const int nl = static_cast<int>(net.lines.size());
  if (static_cast<int>(p_node.size()) != nb || static_cast<int>(q_node.size()) != nb)
    throw InputError("nodal consumption must cover every bus");

  BranchFlowLayout lay;
  const int pq = nl > 0 ? b.add_free(2 * nl) : b.n_vars();
  const int l0 = nl > 0 ? b.add_nonneg(nl) : b.n_vars();
  const int v0 = b.add_nonneg(nb);
  const int ex = b.add_free(3);
  for (int f = 0; f < nl; ++f) {
    lay.p.push_back(pq + f);
    lay.q.push_back(pq + nl + f);
    lay.l.push_back(l0 + f);
  }
  for (int n = 0; n < nb; ++n) lay.v.push_back(v0 + n);
  lay.p_ug = ex;
  lay.q_ug = ex + 1;
  lay.p_loss = ex + 2;

  for (int n = 0; n < nb; ++n) {
    std::vector<std::pair<int, double>> rp, rq;
    const int pl = topo.parent_line[n];
    if (static_cast<std::size_t>(n) == topo.pcc) {
      rp.emplace_back(lay.p_ug, 1.0);
      rq.emplace_back(lay.q_ug, 1.0);
    } else {
      rp.emplace_back(lay.p[pl], 1.0);
      rp.emplace_back(lay.l[pl], -net.lines[pl].r);
      rq.emplace_back(lay.q[pl], 1.0);
      rq.emplace_back(lay.l[pl], -net.lines[pl].x);
    }
    for (int c : topo.children[n]) {
      rp.emplace_back(lay.p[c], -1.0);
      rq.emplace_back(lay.q[c], -1.0);
    }
    lay.row_p_balance.push_back(b.add_row(rp, p_node[n]));
    lay.row_q_balance.push_back(b.add_row(rq, q_node[n]));
  }

  for (int f = 0; f < nl; ++f) {
    const Line& ln = net.lines[f];
    const int vi = lay.v[topo.line_from[f]];
    const int vj = lay.v[topo.line_to[f]];
    lay.row_drop.push_back(b.add_row({{vj, 1.0},
                                      {vi, -1.0},
                                      {lay.p[f], 2.0 * ln.r},
                                      {lay.q[f], 2.0 * ln.x},
                                      {lay.l[f], -(ln.r * ln.r + ln.x * ln.x)}},
                                     0.0));
  }

  std::vector<std::pair<int, double>> loss{{lay.p_loss, 1.0}};
  for (int f = 0; f < nl; ++f) loss.emplace_back(lay.l[f], -net.lines[f].r);
  lay.row_loss = b.add_row(loss, 0.0);
  lay.row_pcc_voltage = b.add_row({{lay.v[topo.pcc], 1.0}}, 1.0);

  for (int f = 0; f < nl; ++f) {
    const int vi = lay.v[topo.line_from[f]];
    const int z = b.add_soc(4);
    b.add_row({{z, 1.0}, {vi, -1.0}, {lay.l[f], -1.0}}, 0.0);
    b.add_row({{z + 1, 1.0}, {lay.p[f], -2.0}}, 0.0);
    b.add_row({{z + 2, 1.0}, {lay.q[f], -2.0}}, 0.0);
    b.add_row({{z + 3, 1.0}, {vi, -1.0}, {lay.l[f], 1.0}}, 0.0);
    ++lay.n_cones;
    if (enforce_limits) {
      const int w = b.add_soc(3);
      b.add_row({{w, 1.0}}, net.lines[f].s_max);
      b.add_row({{w + 1, 1.0}, {lay.p[f], -1.0}}, 0.0);
      b.add_row({{w + 2, 1.0}, {lay.q[f], -1.0}}, 0.0);
      ++lay.n_cones;
    }
  }

  if (enforce_limits) {
    for (int n = 0; n < nb; ++n) {
      if (static_cast<std::size_t>(n) == topo.pcc) continue;
      const Bus& bus = net.buses[n];
      const int s = b.add_nonneg(2);
      b.add_row({{lay.v[n], 1.0}, {s, -1.0}}, bus.vmin * bus.vmin);
      b.add_row({{lay.v[n], 1.0}, {s + 1, 1.0}}, bus.vmax * bus.vmax);
    }
  }
  return lay;
}

std::string Violation::describe(const NetworkModel& net) const {
  std::ostringstream os;
  os << "hour " << t << ": ";
  if (kind == LineLimit) {
    const Line& l = net.lines[index];
    os << "line " << l.from_bus << "-" << l.to_bus << " capacity (|s| = " << value << " > " << limit << ")";
  } else {
    os << "bus " << net.buses[index].id << (kind == VoltageLow ? " voltage lower bound (|v| = " : " voltage upper bound (|v| = ")
       << value << (kind == VoltageLow ? " < " : " > ") << limit << ")";
  }
  return os.str();
}

HourProgram assemble_branch_flow(const NetworkModel& net, const DsoInput& in, int t, bool enforce_limits) {
  const RadialTopology topo = orient(net);
  const std::size_t nb = net.buses.size();
  if (in.p_net_node.size() != nb || in.q_net_node.size() != nb)
    throw InputError("DSO input must cover every bus");
  std::vector<double> pn(nb), qn(nb);
  for (std::size_t n = 0; n < nb; ++n) {
    pn[n] = in.p_net_node[n].at(t);
    qn[n] = in.q_net_node[n].at(t);
  }
  ProgramBuilder b;
  HourProgram hp;
  hp.layout = add_branch_flow(b, net, topo, pn, qn, enforce_limits);
  // C*dt*p + lambda*(pt - p) + rho'/2*(pt - p)^2
  const double lam = in.lambda_loss.at(t), pt = in.p_loss_tilde.at(t), rp = in.rho_prime;
  b.set_linear(hp.layout.p_loss, in.loss_cost.at(t) * in.dt - lam - rp * pt);
  b.add_quadratic(hp.layout.p_loss, rp);
  b.add_offset(lam * pt + 0.5 * rp * pt * pt);
  hp.program = b.build();
  return hp;
}

namespace {

struct HourResult {
  bool solved = false;
  bool relaxed = false;
  SolveStatus status = SolveStatus::IterLimit;
  socp::ConicSolution sol;
  BranchFlowLayout layout;
  std::vector<Violation> violations;
};

std::vector<Violation> find_violations(const NetworkModel& net, const RadialTopology& topo, const HourResult& h,
                                       int t) {
  std::vector<Violation> out;
  const auto& x = h.sol.x;
  for (std::size_t n = 0; n < net.buses.size(); ++n) {
    if (n == topo.pcc) continue;
    const double vm = std::sqrt(std::max(x[h.layout.v[n]], 0.0));
    const Bus& bus = net.buses[n];
    if (vm < bus.vmin - 1e-6) out.push_back({Violation::VoltageLow, static_cast<int>(n), t, vm, bus.vmin});
    if (vm > bus.vmax + 1e-6) out.push_back({Violation::VoltageHigh, static_cast<int>(n), t, vm, bus.vmax});
  }
  for (std::size_t f = 0; f < net.lines.size(); ++f) {
    const double s = std::hypot(x[h.layout.p[f]], x[h.layout.q[f]]);
    if (s > net.lines[f].s_max * (1.0 + 1e-6))
      out.push_back({Violation::LineLimit, static_cast<int>(f), t, s, net.lines[f].s_max});
  }
  return out;
}

HourResult solve_hour(const NetworkModel& net, const RadialTopology& topo, const DsoInput& in, int t,
                      const DsoOptions& opts, bool allow_relax) {
  HourResult h;
  HourProgram hp = assemble_branch_flow(net, in, t, opts.enforce_limits);
  h.sol = socp::solve_socp(hp.program, opts.solver);
  h.layout = hp.layout;
  h.status = h.sol.status;
  if (h.status == SolveStatus::Optimal) {
    h.solved = true;
    return h;
  }
  if (!opts.enforce_limits) return h;

  HourResult r;
  HourProgram free = assemble_branch_flow(net, in, t, false);
  r.sol = socp::solve_socp(free.program, opts.solver);
  r.layout = free.layout;
  r.status = r.sol.status;
  r.relaxed = true;
  if (r.status == SolveStatus::Optimal) {
    r.violations = find_violations(net, topo, r, t);
    r.solved = allow_relax;
  }
  return r;
}

DsoOutput run(const NetworkModel& net, const DsoInput& in, const DsoOptions& opts, bool allow_relax) {
  const RadialTopology topo = orient(net);
  const int T = static_cast<int>(in.p_loss_tilde.size());
  if (in.lambda_loss.size() != in.p_loss_tilde.size() || static_cast<int>(in.loss_cost.size()) != T)
    throw InputError("DSO hourly inputs have inconsistent lengths");
  const std::size_t nb = net.buses.size(), nl = net.lines.size();

  std::vector<HourResult> hours(T);
  parallel_for(static_cast<std::size_t>(T), opts.threads,
               [&](std::size_t t) { hours[t] = solve_hour(net, topo, in, static_cast<int>(t), opts, allow_relax); });

  for (int t = 0; t < T; ++t) {
    const HourResult& h = hours[t];
    if (h.solved) continue;
    std::string why;
    if (h.relaxed && h.status == SolveStatus::Optimal && !h.violations.empty()) {
      why = h.violations.front().describe(net);
      if (h.violations.size() > 1) why += " and " + std::to_string(h.violations.size() - 1) + " more";
    } else if (h.relaxed && h.status == SolveStatus::Optimal) {
      why = "hour " + std::to_string(t) + ": solver did not converge with limits, and no limit is violated without them";
    } else {
      why = "hour " + std::to_string(t) + ": no branch-flow solution (" + socp::to_string(h.status) + ")";
    }
    throw DsoInfeasible("DSO subproblem infeasible at " + why, t);
  }

  DsoOutput out;
  out.p_loss.assign(T, 0.0);
  out.p_ug.assign(T, 0.0);
  out.q_ug.assign(T, 0.0);
  out.objective.assign(T, 0.0);
  out.dlmp.assign(nb, std::vector<double>(T, 0.0));
  out.v.assign(nb, std::vector<double>(T, 0.0));
  out.flows.assign(nl, std::vector<LineFlow>(T));
  out.tightness.assign(nl, std::vector<double>(T, 0.0));
  out.line_from = topo.line_from;
  for (int t = 0; t < T; ++t) {
    const HourResult& h = hours[t];
    const auto& x = h.sol.x;
    const auto& lay = h.layout;
    out.p_loss[t] = x[lay.p_loss];
    out.p_ug[t] = x[lay.p_ug];
    out.q_ug[t] = x[lay.q_ug];
    out.objective[t] = h.sol.obj;
    out.loss_cost += in.loss_cost[t] * out.p_loss[t] * in.dt;
    out.iterations += h.sol.iterations;
    for (std::size_t n = 0; n < nb; ++n) {
      out.dlmp[n][t] = h.sol.y[lay.row_p_balance[n]] / in.dt;
      out.v[n][t] = x[lay.v[n]];
    }
    for (std::size_t f = 0; f < nl; ++f) {
      LineFlow fl{x[lay.p[f]], x[lay.q[f]], x[lay.l[f]]};
      // With r = x = 0 the current appears only in its own cone, so any value
      // above the boundary is optimal; report the physical one.
      const double vf = x[lay.v[topo.line_from[f]]];
      if (net.lines[f].r == 0.0 && net.lines[f].x == 0.0 && vf > 0.0) fl.l = (fl.p * fl.p + fl.q * fl.q) / vf;
      out.flows[f][t] = fl;
      out.tightness[f][t] = out.v[topo.line_from[f]][t] * fl.l - (fl.p * fl.p + fl.q * fl.q);
    }
    if (h.relaxed) {
      out.limits_relaxed = true;
      out.violations.insert(out.violations.end(), h.violations.begin(), h.violations.end());
    }
  }
  return out;
}

}  // namespace

DsoOutput solve_dso_subproblem(const NetworkModel& net, const DsoInput& in, const DsoOptions& opts) {
  return run(net, in, opts, false);
}

DsoOutput evaluate_network(const NetworkModel& net, const DsoInput& in, const DsoOptions& opts) {
  return run(net, in, opts, true);
}

TightnessReport check_tightness(const DsoOutput& out, double tol) {
  TightnessReport rep;
  for (std::size_t f = 0; f < out.flows.size(); ++f)
    for (std::size_t t = 0; t < out.flows[f].size(); ++t) {
      const LineFlow& fl = out.flows[f][t];
      const double res = out.v[out.line_from[f]][t] * fl.l - (fl.p * fl.p + fl.q * fl.q);
      rep.max_residual = std::max(rep.max_residual, res);
      if (res > tol) rep.loose.push_back({static_cast<int>(f), static_cast<int>(t), res});
    }
  return rep;
}

DsoInput evaluation_input(const std::vector<std::vector<double>>& p_node, const std::vector<std::vector<double>>& q_node,
                          const std::vector<double>& loss_cost, double dt) {
  DsoInput in;
  in.p_net_node = p_node;
  in.q_net_node = q_node;
  in.loss_cost = loss_cost;
  in.dt = dt;
  in.rho_prime = 0.0;
  in.p_loss_tilde.assign(loss_cost.size(), 0.0);
  in.lambda_loss.assign(loss_cost.size(), 0.0);
  return in;
}

std::vector<double> reactive_ratio(const Scenario& sc) {
  const auto& buses = sc.network.buses;
  std::vector<double> ratio(buses.size(), 0.0), pf_sum(buses.size(), 0.0);
  std::vector<int> count(buses.size(), 0);
  for (const Prosumer& p : sc.prosumers) {
    const std::size_t n = sc.network.bus_index(p.bus_id);
    pf_sum[n] += p.pf_load;
    ++count[n];
  }
  for (std::size_t n = 0; n < buses.size(); ++n) {
    if (buses[n].p_load > 0.0)
      ratio[n] = buses[n].q_load / buses[n].p_load;
    else if (count[n] > 0)
      ratio[n] = reactive_from_pf(1.0, pf_sum[n] / count[n]);
  }
  return ratio;
}

std::vector<std::vector<double>> reactive_injections(const std::vector<double>& ratio,
                                                     const std::vector<std::vector<double>>& p_node) {
  if (ratio.size() != p_node.size()) throw InputError("reactive ratio does not cover every bus");
  auto q = p_node;
  for (std::size_t n = 0; n < q.size(); ++n)
    for (double& v : q[n]) v *= ratio[n];
  return q;
}

}  // namespace lem::dso
