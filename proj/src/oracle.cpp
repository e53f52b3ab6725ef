#include "lem/oracle.hpp"

#include "lem/parallel.hpp"

namespace lem::oracle {

std::string to_string(Mode m) { return m == Mode::Centralized ? "centralized" : "selfish"; }

namespace {

struct Joint {
  socp::ConicProgram program;
  miqp::MixedBinaryProgram meta;
  std::vector<dso::BranchFlowLayout> hours;
  std::vector<prosumer::SubproblemLayout> prosumers;
  prosumer::ProsumerInput input;  // device costs only
};

Joint assemble(const Scenario& sc, bool enforce_limits) {
  Joint j;
  socp::ProgramBuilder b;
  const dso::RadialTopology topo = dso::orient(sc.network);
  const std::vector<double> ratio = dso::reactive_ratio(sc);
  const std::size_t N = sc.network.buses.size();
  const int T = sc.horizon;
  for (int t = 0; t < T; ++t) {
    std::vector<double> p(N), q(N);
    for (std::size_t n = 0; n < N; ++n) {
      p[n] = sc.background_p(n, t);
      q[n] = ratio[n] * p[n];
    }
    dso::BranchFlowLayout lay = dso::add_branch_flow(b, sc.network, topo, p, q, enforce_limits);
    b.add_linear(lay.p_ug, sc.wem_price()[t] * sc.dt);
    b.add_linear(lay.p_loss, sc.loss_cost()[t] * sc.dt);
    j.hours.push_back(std::move(lay));
  }
  j.input = prosumer::ProsumerInput::priced(std::vector<double>(T, 0.0), sc.dt);
  for (const Prosumer& pr : sc.prosumers) {
    prosumer::SubproblemLayout L = prosumer::append_prosumer(b, j.meta, pr, j.input);
    const std::size_t n = sc.network.bus_index(pr.bus_id);
    for (int t = 0; t < T; ++t) {
      b.add_to_row(j.hours[t].row_p_balance[n], L.p_net[t], -1.0);
      if (ratio[n] != 0.0) b.add_to_row(j.hours[t].row_q_balance[n], L.p_net[t], -ratio[n]);
    }
    j.prosumers.push_back(std::move(L));
  }
  j.program = b.build();
  return j;
}

std::vector<std::pair<int, double>> binary_fixings(const Joint& j, const market::ClearingResult& from) {
  if (from.schedules.size() != j.prosumers.size())
    throw InputError("distributed result does not match the scenario's prosumers");
  std::vector<std::pair<int, double>> fixes;
  for (std::size_t a = 0; a < j.prosumers.size(); ++a) {
    const auto& L = j.prosumers[a];
    const auto& s = from.schedules[a];
    for (std::size_t k = 0; k < L.storages.size(); ++k)
      for (int t = 0; t < L.T; ++t) {
        if (L.storages[k].x_ch[t] < 0) continue;
        fixes.emplace_back(L.storages[k].x_ch[t], s.storages.at(k).x_ch.at(t));
        fixes.emplace_back(L.storages[k].x_dch[t], s.storages.at(k).x_dch.at(t));
      }
    for (std::size_t f = 0; f < L.fls.size(); ++f)
      for (int t = 0; t < L.T; ++t) fixes.emplace_back(L.fls[f].y[t], s.fls.at(f).y_fl.at(t));
  }
  return fixes;
}

struct Solved {
  socp::ConicSolution sol;
  Eigen::VectorXd x, y;  // in the full program's indexing
  bool ok = false;
};

Solved solve_joint(const Joint& j, const std::vector<std::pair<int, double>>& fixes,
                   const socp::SolverOptions& opts) {
  Solved out;
  if (fixes.empty()) {
    out.sol = socp::solve_socp(j.program, opts);
    out.ok = out.sol.status == socp::SolveStatus::Optimal;
    out.x = out.sol.x;
    out.y = out.sol.y;
    return out;
  }
  const socp::ReducedProgram red = socp::fix_variables(j.program, fixes);
  if (red.infeasible) return out;
  out.sol = socp::solve_socp(red.program, opts);
  out.ok = out.sol.status == socp::SolveStatus::Optimal;
  if (!out.ok) return out;
  out.x = red.expand(out.sol.x);
  out.y = Eigen::VectorXd::Zero(j.program.n_eq());
  for (int i = 0; i < j.program.n_eq(); ++i)
    if (red.row_of[i] >= 0) out.y[i] = out.sol.y[red.row_of[i]];
  return out;
}

}  // namespace

OracleResult solve_centralized(const Scenario& scenario, const market::ClearingResult* fixed_from,
                               const CentralizedOptions& opts) {
  const ValidationReport rep = validate_scenario(scenario);
  if (!rep.ok()) throw InputError("invalid scenario: " + rep.summary());
  const Scenario sc = to_per_unit(scenario);
  const int T = sc.horizon;
  const std::size_t N = sc.network.buses.size();

  const Joint j = assemble(sc, opts.enforce_limits);
  const auto fixes = fixed_from ? binary_fixings(j, *fixed_from) : std::vector<std::pair<int, double>>{};
  const Solved s = solve_joint(j, fixes, opts.solver);
  if (!s.ok) {
    // Name the family: drop network limits, then the binary pinning.
    std::string family = "prosumer device constraints";
    if (opts.enforce_limits && solve_joint(assemble(sc, false), fixes, opts.solver).ok)
      family = "network limits (line capacity or voltage bounds)";
    else if (!fixes.empty() && solve_joint(j, {}, opts.solver).ok)
      family = "binary assignment taken from the distributed run";
    throw OracleInfeasible("centralized program infeasible (" + socp::to_string(s.sol.status) +
                           "): " + family + " cannot be met");
  }

  OracleResult r;
  r.mode = Mode::Centralized;
  r.base_mva = sc.network.base_mva;
  r.objective = s.sol.obj;
  r.iterations = s.sol.iterations;
  r.note = fixed_from ? "binaries fixed from the distributed run" : "binaries relaxed to [0, 1]";
  r.dlmp.assign(N, std::vector<double>(T, 0.0));
  r.p_ug.resize(T);
  r.p_loss.resize(T);
  for (int t = 0; t < T; ++t) {
    const auto& lay = j.hours[t];
    r.p_ug[t] = s.x[lay.p_ug];
    r.p_loss[t] = s.x[lay.p_loss];
    for (std::size_t n = 0; n < N; ++n) r.dlmp[n][t] = s.y[lay.row_p_balance[n]] / sc.dt;
  }
  Matrix p_net;
  for (std::size_t a = 0; a < sc.prosumers.size(); ++a) {
    r.schedules.push_back(
        prosumer::extract_schedule(sc.prosumers[a], j.input, j.prosumers[a], s.x, fixed_from != nullptr));
    p_net.push_back(r.schedules.back().p_net);
  }
  r.p_net_node = market::nodal_injections(sc, p_net);
  r.costs = market::compute_costs(sc, r.schedules, r.dlmp, r.p_ug, r.p_loss);
  return r;
}

OracleResult solve_selfish(const Scenario& scenario, const prosumer::ProsumerOptions& popts,
                           const dso::DsoOptions& dopts, int threads) {
  const ValidationReport rep = validate_scenario(scenario);
  if (!rep.ok()) throw InputError("invalid scenario: " + rep.summary());
  const Scenario sc = to_per_unit(scenario);
  const int T = sc.horizon;
  const std::size_t A = sc.prosumers.size();
  const std::size_t N = sc.network.buses.size();

  OracleResult r;
  r.mode = Mode::Selfish;
  r.base_mva = sc.network.base_mva;
  r.note = "selfish prosumers face the wholesale price (passthrough tariff)";
  r.schedules.resize(A);
  const auto in = prosumer::ProsumerInput::priced(sc.wem_price(), sc.dt);
  parallel_for(A, threads,
               [&](std::size_t a) { r.schedules[a] = prosumer::solve_subproblem_III(sc.prosumers[a], in, popts); });
  Matrix p_net;
  for (const auto& s : r.schedules) p_net.push_back(s.p_net);
  r.p_net_node = market::nodal_injections(sc, p_net);

  const auto q = dso::reactive_injections(dso::reactive_ratio(sc), r.p_net_node);
  r.network = dso::evaluate_network(sc.network, dso::evaluation_input(r.p_net_node, q, sc.loss_cost(), sc.dt), dopts);
  r.violations = r.network.violations;
  r.p_loss = r.network.p_loss;
  r.p_ug.assign(T, 0.0);
  for (int t = 0; t < T; ++t) {
    r.p_ug[t] = r.p_loss[t];
    for (std::size_t n = 0; n < N; ++n) r.p_ug[t] += r.p_net_node[n][t];
  }
  // Tariff seen by every prosumer.
  r.dlmp.assign(N, sc.wem_price());
  r.costs = market::compute_costs(sc, r.schedules, r.dlmp, r.p_ug, r.p_loss);
  r.objective = r.costs.social();
  r.dlmp.clear();
  return r;
}

}  // namespace lem::oracle
