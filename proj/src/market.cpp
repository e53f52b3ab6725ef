#include "lem/market.hpp"

#include "lem/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

namespace lem::market {

using nlohmann::json;

namespace {

const std::set<std::string> kEnvelope = {"type", "outer", "inner"};

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"LmoToProsumer", {"prosumer", "lambda_lem", "p_tilde", "lambda_p"}},
      {"ProsumerToLmo", {"prosumer", "p_net"}},
      {"LmoToDso", {"p_net_node", "p_loss_tilde", "lambda_loss"}},
      {"DsoToLmo", {"p_loss", "dlmp"}},
  };
  return s;
}

struct Clock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double millis() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
};

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t t = 0; t < a[i].size(); ++t) m = std::max(m, std::abs(a[i][t] - b[i][t]));
  return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) m = std::max(m, std::abs(a[t] - b[t]));
  return m;
}

}  // namespace

std::string serialize(const AgentMessage& msg, int outer, int inner) {
  json j;
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, LmoToProsumer>) {
          j["type"] = "LmoToProsumer";
          j["prosumer"] = m.prosumer;
          j["lambda_lem"] = m.lambda_lem;
          j["p_tilde"] = m.p_tilde;
          j["lambda_p"] = m.lambda_p;
        } else if constexpr (std::is_same_v<M, ProsumerToLmo>) {
          j["type"] = "ProsumerToLmo";
          j["prosumer"] = m.prosumer;
          j["p_net"] = m.p_net;
        } else if constexpr (std::is_same_v<M, LmoToDso>) {
          j["type"] = "LmoToDso";
          j["p_net_node"] = m.p_net_node;
          j["p_loss_tilde"] = m.p_loss_tilde;
          j["lambda_loss"] = m.lambda_loss;
        } else {
          j["type"] = "DsoToLmo";
          j["p_loss"] = m.p_loss;
          j["dlmp"] = m.dlmp;
        }
      },
      msg);
  j["outer"] = outer;
  j["inner"] = inner;
  return j.dump();
}

AgentMessage parse_message(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed message: ") + e.what());
  }
  const std::string type = j.value("type", "");
  const auto it = schema().find(type);
  if (it == schema().end()) throw InputError("unknown message type '" + type + "'");
  for (const auto& [key, _] : j.items())
    if (!kEnvelope.count(key) && !it->second.count(key))
      throw InputError("field '" + key + "' not allowed in " + type);
  try {
    if (type == "LmoToProsumer")
      return LmoToProsumer{j.at("prosumer").get<int>(), j.at("lambda_lem").get<std::vector<double>>(),
                           j.at("p_tilde").get<std::vector<double>>(), j.at("lambda_p").get<std::vector<double>>()};
    if (type == "ProsumerToLmo")
      return ProsumerToLmo{j.at("prosumer").get<int>(), j.at("p_net").get<std::vector<double>>()};
    if (type == "LmoToDso")
      return LmoToDso{j.at("p_net_node").get<Matrix>(), j.at("p_loss_tilde").get<std::vector<double>>(),
                      j.at("lambda_loss").get<std::vector<double>>()};
    return DsoToLmo{j.at("p_loss").get<std::vector<double>>(), j.at("dlmp").get<Matrix>()};
  } catch (const json::exception& e) {
    throw InputError("malformed " + type + " message: " + e.what());
  }
}

std::string to_string(Status s) { return s == Status::Converged ? "Converged" : "IterLimit"; }

double AgentCosts::prosumer_average() const {
  if (prosumers.empty()) return 0.0;
  double s = 0.0;
  for (double c : prosumers) s += c;
  return s / static_cast<double>(prosumers.size());
}

bool check_stop(const std::vector<double>& residual, double eps) {
  if (!(eps > 0.0)) throw InputError("stopping tolerance must be positive");
  for (double r : residual)
    if (!(std::abs(r) <= eps)) return false;
  return true;
}

PrivacyReport audit_privacy(const std::vector<std::string>& log) {
  PrivacyReport rep;
  if (log.empty()) {
    rep.warnings.push_back("message log is empty; nothing to audit");
    return rep;
  }
  for (std::size_t i = 0; i < log.size(); ++i) {
    const std::string where = "line " + std::to_string(i + 1);
    json j;
    try {
      j = json::parse(log[i]);
    } catch (const json::exception&) {
      rep.violations.push_back(where + ": not a JSON object");
      continue;
    }
    if (!j.is_object()) {
      rep.violations.push_back(where + ": not a JSON object");
      continue;
    }
    const std::string type = j.contains("type") && j["type"].is_string() ? j["type"].get<std::string>() : "";
    const auto it = schema().find(type);
    if (it == schema().end()) {
      rep.violations.push_back(where + ": unknown message type '" + type + "'");
      continue;
    }
    for (const auto& [key, _] : j.items())
      if (!kEnvelope.count(key) && !it->second.count(key))
        rep.violations.push_back(where + ": field '" + key + "' not allowed in " + type);
  }
  rep.pass = rep.violations.empty();
  return rep;
}

Matrix nodal_injections(const Scenario& sc, const Matrix& p_net) {
  const auto psi = lmo::Psi::from_scenario(sc);
  Matrix bg(sc.network.buses.size(), std::vector<double>(sc.horizon, 0.0));
  for (std::size_t n = 0; n < bg.size(); ++n)
    for (int t = 0; t < sc.horizon; ++t) bg[n][t] = sc.background_p(n, t);
  return lmo::aggregate_to_nodes(psi, p_net, bg);
}

AgentCosts compute_costs(const Scenario& sc, const std::vector<prosumer::ProsumerSchedule>& schedules,
                         const Matrix& dlmp, const std::vector<double>& p_ug, const std::vector<double>& p_loss) {
  AgentCosts c;
  const double dt = sc.dt;
  for (int t = 0; t < sc.horizon; ++t) {
    c.lmo += p_ug[t] * sc.wem_price()[t] * dt;
    c.dso += p_loss[t] * sc.loss_cost()[t] * dt;
  }
  for (std::size_t a = 0; a < schedules.size(); ++a) {
    const Prosumer& pr = sc.prosumers[a];
    const std::size_t n = sc.network.bus_index(pr.bus_id);
    const double dev = prosumer::device_cost(pr, schedules[a], dt);
    double energy = 0.0;
    for (int t = 0; t < sc.horizon; ++t) energy += schedules[a].p_net[t] * dlmp[n][t] * dt;
    c.prosumers.push_back(energy + dev);
    c.device_total += dev;
  }
  return c;
}

ClearingResult run_clearing(const Scenario& scenario, const ClearingOptions& opts) {
  const ValidationReport rep = validate_scenario(scenario);
  if (!rep.ok()) throw InputError("invalid scenario: " + rep.summary());
  validate_admm_config(scenario.admm);
  const Scenario sc = to_per_unit(scenario);
  const AdmmConfig& cfg = sc.admm;
  const int T = sc.horizon;
  const std::size_t A = sc.prosumers.size();
  const std::size_t N = sc.network.buses.size();

  ClearingResult res;
  res.base_mva = sc.network.base_mva;
  ConvergenceTrace& trace = res.trace;
  trace.eps1 = cfg.eps1;
  trace.eps2 = cfg.eps2;
  auto log = [&](const AgentMessage& m, int outer, int inner) {
    if (opts.log_messages) res.messages.push_back(serialize(m, outer, inner));
  };

  // DSO private data: network, loss prices and reactive ratios.
  const std::vector<double> ratio = dso::reactive_ratio(sc);
  auto dso_agent = [&](const LmoToDso& m, dso::DsoOutput& out) {
    dso::DsoInput in;
    in.p_net_node = m.p_net_node;
    in.q_net_node = dso::reactive_injections(ratio, m.p_net_node);
    in.p_loss_tilde = m.p_loss_tilde;
    in.lambda_loss = m.lambda_loss;
    in.loss_cost = sc.loss_cost();
    in.dt = sc.dt;
    in.rho_prime = cfg.rho_prime;
    out = dso::solve_dso_subproblem(sc.network, in, opts.dso);
    return DsoToLmo{out.p_loss, out.dlmp};
  };

  // LMO state. Prices start at zero until the DSO has spoken.
  lmo::LmoState st = lmo::LmoState::initial(sc);
  Matrix lambda_lem(A, std::vector<double>(T, 0.0));
  Matrix bg(N, std::vector<double>(T, 0.0));
  for (std::size_t n = 0; n < N; ++n)
    for (int t = 0; t < T; ++t) bg[n][t] = sc.background_p(n, t);
  std::vector<double> bg_total(T, 0.0);
  for (int t = 0; t < T; ++t)
    for (std::size_t n = 0; n < N; ++n) bg_total[t] += bg[n][t];

  std::vector<prosumer::ProsumerSchedule> schedules(A);
  Matrix p_net(A, std::vector<double>(T, 0.0));
  std::vector<double> p_loss(T, 0.0), p_ug(T, 0.0);

  for (int k = 1; k <= cfg.max_outer; ++k) {
    Clock outer_clock;
    OuterRecord orec;
    orec.outer = k;

    // Prosumers solve on the last signals they received.
    std::vector<LmoToProsumer> down(A);
    for (std::size_t a = 0; a < A; ++a) {
      down[a] = {sc.prosumers[a].id, lambda_lem[a], st.p_tilde[a], st.lambda_p[a]};
      log(down[a], k, 0);
    }
    std::vector<ProsumerToLmo> up(A);
    try {
      parallel_for(A, opts.threads, [&](std::size_t a) {
        prosumer::ProsumerInput in;
        in.lambda_lem = down[a].lambda_lem;
        in.p_tilde = down[a].p_tilde;
        in.lambda_p = down[a].lambda_p;
        in.rho = cfg.rho;
        in.dt = sc.dt;
        schedules[a] = prosumer::solve_subproblem_III(sc.prosumers[a], in, opts.prosumer);
        up[a] = {sc.prosumers[a].id, schedules[a].p_net};
      });
    } catch (const std::exception& e) {
      throw ClearingError(std::string("outer iteration ") + std::to_string(k) + ": " + e.what(), trace);
    }
    for (std::size_t a = 0; a < A; ++a) {
      log(up[a], k, 0);
      p_net[a] = up[a].p_net;
      orec.prosumer_objective += schedules[a].objective;
      orec.max_subproblem_gap = std::max(orec.max_subproblem_gap, schedules[a].gap);
      orec.subproblem_nodes += schedules[a].nodes;
    }
    orec.millis_prosumers = outer_clock.millis();
    const Matrix p_node = lmo::aggregate_to_nodes(st.psi, p_net, bg);

    // Inner loop: DSO and LMO, warm-started from the previous outer pass.
    lmo::SubproblemI sub;
    for (int kk = 1; kk <= cfg.max_inner; ++kk) {
      Clock inner_clock;
      InnerRecord irec;
      irec.outer = k;
      irec.inner = kk;
      LmoToDso to_dso{p_node, st.p_loss_tilde, st.lambda_loss};
      log(to_dso, k, kk);
      DsoToLmo from_dso;
      try {
        from_dso = dso_agent(to_dso, res.network);
      } catch (const std::exception& e) {
        throw ClearingError("outer iteration " + std::to_string(k) + ", inner " + std::to_string(kk) + ": " +
                                e.what(),
                            trace);
      }
      log(from_dso, k, kk);
      p_loss = from_dso.p_loss;
      for (double o : res.network.objective) irec.dso_objective += o;

      sub = lmo::solve_subproblem_I(st, sc.wem_price(), p_net, p_loss, cfg, sc.dt, bg_total);
      st.p_tilde = sub.p_tilde;
      st.p_loss_tilde = sub.p_loss_tilde;
      p_ug = sub.p_ug;
      irec.lmo_objective = sub.objective;
      irec.loss_residual = max_abs_diff(st.p_loss_tilde, p_loss);

      const auto next = lmo::update_loss_dual(st.lambda_loss, st.p_loss_tilde, p_loss, cfg);
      std::vector<double> change(T);
      for (int t = 0; t < T; ++t) change[t] = next[t] - st.lambda_loss[t];
      st.lambda_loss = next;
      for (double c : change) irec.lambda_loss_change = std::max(irec.lambda_loss_change, std::abs(c));
      irec.stop = check_stop(change, cfg.eps2);
      res.dlmp = from_dso.dlmp;
      irec.millis = inner_clock.millis();
      trace.inner.push_back(irec);
      ++orec.inner_iterations;
      if (irec.stop) break;
    }

    // LMO sends prices and targets, then updates the power multipliers.
    lambda_lem = lmo::map_dlmp_to_prosumers(st.psi, res.dlmp);
    const Matrix next = lmo::update_power_dual(st.lambda_p, st.p_tilde, p_net, cfg);
    std::vector<double> change;
    for (std::size_t a = 0; a < A; ++a)
      for (int t = 0; t < T; ++t) change.push_back(next[a][t] - st.lambda_p[a][t]);
    st.lambda_p = next;
    for (double c : change) orec.lambda_p_change = std::max(orec.lambda_p_change, std::abs(c));
    orec.consensus_residual = max_abs_diff(st.p_tilde, p_net);
    orec.stop = check_stop(change, cfg.eps1);
    orec.millis = outer_clock.millis();
    trace.outer.push_back(orec);
    res.outer_iterations = k;
    if (orec.stop) {
      res.status = Status::Converged;
      break;
    }
  }

  res.schedules = std::move(schedules);
  res.p_ug = p_ug;
  res.p_loss = p_loss;
  res.p_loss_tilde = st.p_loss_tilde;
  res.lambda_loss = st.lambda_loss;
  res.p_tilde = st.p_tilde;
  res.lambda_p = st.lambda_p;
  res.p_net_node = nodal_injections(sc, p_net);
  res.costs = compute_costs(sc, res.schedules, res.dlmp, res.p_ug, res.p_loss);
  return res;
}

}  // namespace lem::market
