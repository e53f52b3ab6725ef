#include "lem/model.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace lem {

std::size_t NetworkModel::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == id) return i;
  throw InputError("unknown bus " + std::to_string(id));
}

bool NetworkModel::has_bus(int id) const {
  for (const auto& b : buses)
    if (b.id == id) return true;
  return false;
}

std::size_t NetworkModel::pcc_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].is_pcc) return i;
  throw InputError("network has no PCC bus");
}

double Scenario::background_p(std::size_t n, int t) const {
  return network.buses[n].p_load * profiles.load_scale[t];
}

double Scenario::background_q(std::size_t n, int t) const {
  return network.buses[n].q_load * profiles.load_scale[t];
}

std::string ValidationReport::summary() const {
  if (errors.empty()) return "ok";
  std::ostringstream os;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (i) os << "; ";
    os << errors[i];
  }
  return os.str();
}

void validate_admm_config(const AdmmConfig& cfg) {
  if (!(cfg.rho > 0.0)) throw InputError("rho must be positive");
  if (!(cfg.rho_prime > 0.0)) throw InputError("rho_prime must be positive");
  if (!(cfg.eps1 > 0.0)) throw InputError("eps1 must be positive");
  if (!(cfg.eps2 > 0.0)) throw InputError("eps2 must be positive");
  if (cfg.max_outer < 1) throw InputError("max_outer must be at least 1");
  if (cfg.max_inner < 1) throw InputError("max_inner must be at least 1");
}

ValidationReport validate_network(const NetworkModel& net) {
  ValidationReport rep;
  auto& err = rep.errors;
  const std::size_t nb = net.buses.size();
  if (nb == 0) {
    err.emplace_back("network has no buses");
    return rep;
  }

  std::map<int, std::size_t> index;
  for (std::size_t i = 0; i < nb; ++i) {
    const Bus& b = net.buses[i];
    if (!index.emplace(b.id, i).second) err.push_back("duplicate bus id " + std::to_string(b.id));
    if (!(b.vmin > 0.0) || !(b.vmin <= b.vmax))
      err.push_back("bus " + std::to_string(b.id) + " voltage bounds invalid (need 0 < vmin <= vmax)");
    if (b.p_load < 0.0) err.push_back("bus " + std::to_string(b.id) + " negative background load");
  }

  int n_pcc = 0;
  std::size_t pcc = 0;
  for (std::size_t i = 0; i < nb; ++i)
    if (net.buses[i].is_pcc) {
      ++n_pcc;
      pcc = i;
    }
  if (n_pcc == 0) err.emplace_back("missing PCC");
  if (n_pcc > 1) err.emplace_back("multiple PCC buses");

  std::vector<std::vector<std::size_t>> adj(nb);
  bool endpoints_ok = true;
  for (std::size_t f = 0; f < net.lines.size(); ++f) {
    const Line& l = net.lines[f];
    const std::string tag = "line " + std::to_string(l.from_bus) + "-" + std::to_string(l.to_bus);
    if (l.r < 0.0) err.push_back(tag + " negative r");
    if (l.x < 0.0) err.push_back(tag + " negative x");
    if (!(l.s_max > 0.0)) err.push_back(tag + " nonpositive s_max");
    auto a = index.find(l.from_bus);
    auto b = index.find(l.to_bus);
    if (a == index.end() || b == index.end()) {
      err.push_back(tag + " references unknown bus");
      endpoints_ok = false;
      continue;
    }
    if (a->second == b->second) {
      err.push_back(tag + " is a self loop");
      endpoints_ok = false;
      continue;
    }
    adj[a->second].push_back(b->second);
    adj[b->second].push_back(a->second);
  }

  bool cycle = net.lines.size() + 1 > nb;

  if (endpoints_ok && n_pcc >= 1) {
    // Depth-first spanning tree from the PCC; a revisit through a non-parent
    // edge is a cycle, an unvisited bus is disconnected.
    std::vector<int> parent(nb, -2);
    std::vector<std::size_t> stack{pcc};
    parent[pcc] = -1;
    while (!stack.empty()) {
      std::size_t u = stack.back();
      stack.pop_back();
      bool skipped_parent = false;
      for (std::size_t v : adj[u]) {
        if (static_cast<int>(v) == parent[u] && !skipped_parent) {
          skipped_parent = true;
          continue;
        }
        if (parent[v] != -2) {
          cycle = true;
          continue;
        }
        parent[v] = static_cast<int>(u);
        stack.push_back(v);
      }
    }
    for (std::size_t i = 0; i < nb; ++i)
      if (parent[i] == -2) err.push_back("disconnected bus " + std::to_string(net.buses[i].id));
  }
  if (cycle) err.emplace_back("cycle detected");
  return rep;
}

namespace {

void check_hourly(const std::vector<double>& v, int T, const std::string& what,
                  std::vector<std::string>& err) {
  if (static_cast<int>(v.size()) != T)
    err.push_back(what + " has " + std::to_string(v.size()) + " entries, expected " +
                  std::to_string(T));
}

}  // namespace

ValidationReport validate_scenario(const Scenario& sc) {
  ValidationReport rep = validate_network(sc.network);
  auto& err = rep.errors;
  const int T = sc.horizon;
  if (T < 1) err.emplace_back("horizon must be at least 1");
  if (!(sc.dt > 0.0)) err.emplace_back("dt must be positive");
  if (!(sc.network.base_mva > 0.0) || !(sc.network.base_kv > 0.0))
    err.emplace_back("nonpositive base values");
  check_hourly(sc.profiles.wem_price, T, "wem_price", err);
  check_hourly(sc.profiles.loss_cost, T, "loss_cost", err);
  check_hourly(sc.profiles.load_scale, T, "load_scale", err);
  check_hourly(sc.profiles.pv_cf, T, "pv_cf", err);
  try {
    validate_admm_config(sc.admm);
  } catch (const InputError& e) {
    err.emplace_back(e.what());
  }

  std::map<int, int> seen;
  for (const Prosumer& p : sc.prosumers) {
    const std::string tag = "prosumer " + std::to_string(p.id);
    if (seen[p.id]++) err.push_back("duplicate " + tag);
    if (!sc.network.has_bus(p.bus_id)) err.push_back(tag + " at unknown bus " + std::to_string(p.bus_id));
    check_hourly(p.baseline_load, T, tag + " baseline_load", err);
    for (double v : p.baseline_load)
      if (v < 0.0) {
        err.push_back(tag + " negative baseline load");
        break;
      }
    if (!(p.pf_load > 0.0 && p.pf_load <= 1.0)) err.push_back(tag + " pf_load outside (0,1]");
    for (const PvUnit& u : p.pvs) {
      check_hourly(u.p_forecast, T, tag + " pv forecast", err);
      for (double v : u.p_forecast)
        if (v < 0.0) {
          err.push_back(tag + " negative pv forecast");
          break;
        }
      if (!(u.s_inv > 0.0)) err.push_back(tag + " pv inverter capacity must be positive");
      if (!(u.pf > 0.0 && u.pf <= 1.0)) err.push_back(tag + " pv power factor outside (0,1]");
    }
    for (const StorageDevice& s : p.storages) {
      if (!(s.eta_ch > 0.0 && s.eta_ch <= 1.0) || !(s.eta_dch > 0.0 && s.eta_dch <= 1.0))
        err.push_back(tag + " storage efficiency outside (0,1]");
      if (!(0.0 <= s.soc_min && s.soc_min <= s.e0 && s.e0 <= s.soc_max))
        err.push_back(tag + " storage needs 0 <= soc_min <= e0 <= soc_max");
      if (s.e_trip > s.soc_max) err.push_back(tag + " storage e_trip exceeds soc_max");
      if (s.t_arrive > s.t_depart) err.push_back(tag + " storage window empty");
      if (s.t_arrive < 0 || s.t_depart >= T) err.push_back(tag + " storage window outside horizon");
      if (s.p_ch_max < 0.0 || s.p_dch_max < 0.0) err.push_back(tag + " negative storage power limit");
    }
    for (const FlexibleLoad& f : p.fls) {
      check_hourly(f.p_fl_max, T, tag + " fl limit", err);
      for (double v : f.p_fl_max)
        if (v < 0.0) {
          err.push_back(tag + " negative fl limit");
          break;
        }
      if (f.t_max < 0 || f.t_max > T) err.push_back(tag + " fl t_max outside [0, horizon]");
      if (f.e_min < 0.0) err.push_back(tag + " negative fl e_min");
    }
  }
  return rep;
}

void materialize_profiles(Scenario& sc) {
  const int T = sc.horizon;
  const auto& pr = sc.profiles;
  for (Prosumer& p : sc.prosumers) {
    p.baseline_load.assign(T, 0.0);
    for (int t = 0; t < T; ++t) p.baseline_load[t] = p.peak_load * pr.load_scale[t];
    for (PvUnit& u : p.pvs) {
      u.p_forecast.assign(T, 0.0);
      for (int t = 0; t < T; ++t) u.p_forecast[t] = u.capacity * pr.pv_cf[t];
    }
    for (FlexibleLoad& f : p.fls) {
      f.p_fl_max.assign(T, 0.0);
      for (int t = 0; t < T; ++t) f.p_fl_max[t] = f.max_share * p.baseline_load[t];
    }
  }
}

double impedance_base(double base_kv, double base_mva) {
  if (!(base_kv > 0.0) || !(base_mva > 0.0)) throw InputError("nonpositive base values");
  return base_kv * base_kv / base_mva;
}

namespace {

// power_scale multiplies powers and energies; price_scale multiplies
// currency-per-energy quantities; z_scale multiplies impedances.
Scenario rescale(const Scenario& in, double power_scale, double z_scale, UnitSystem target) {
  Scenario out = in;
  out.units = target;
  const double price_scale = 1.0 / power_scale;
  auto scale_vec = [](std::vector<double>& v, double k) {
    for (double& e : v) e *= k;
  };
  for (Bus& b : out.network.buses) {
    b.p_load *= power_scale;
    b.q_load *= power_scale;
  }
  for (Line& l : out.network.lines) {
    l.r *= z_scale;
    l.x *= z_scale;
    l.s_max *= power_scale;
  }
  scale_vec(out.profiles.wem_price, price_scale);
  scale_vec(out.profiles.loss_cost, price_scale);
  for (Prosumer& p : out.prosumers) {
    p.peak_load *= power_scale;
    scale_vec(p.baseline_load, power_scale);
    for (PvUnit& u : p.pvs) {
      u.capacity *= power_scale;
      u.s_inv *= power_scale;
      scale_vec(u.p_forecast, power_scale);
    }
    for (StorageDevice& s : p.storages) {
      s.p_ch_max *= power_scale;
      s.p_dch_max *= power_scale;
      s.e0 *= power_scale;
      s.soc_min *= power_scale;
      s.soc_max *= power_scale;
      s.e_trip *= power_scale;
      s.throughput_cost *= price_scale;
    }
    for (FlexibleLoad& f : p.fls) {
      scale_vec(f.p_fl_max, power_scale);
      f.e_min *= power_scale;
      f.discomfort_cost *= price_scale;
    }
  }
  return out;
}

}  // namespace

Scenario to_per_unit(const Scenario& raw) {
  if (raw.units == UnitSystem::PerUnit) return raw;
  const double zb = impedance_base(raw.network.base_kv, raw.network.base_mva);
  return rescale(raw, 1.0 / raw.network.base_mva, 1.0 / zb, UnitSystem::PerUnit);
}

Scenario from_per_unit(const Scenario& pu) {
  if (pu.units == UnitSystem::Physical) return pu;
  const double zb = impedance_base(pu.network.base_kv, pu.network.base_mva);
  return rescale(pu, pu.network.base_mva, zb, UnitSystem::Physical);
}

double reactive_from_pf(double p, double pf) {
  if (!(pf > 0.0 && pf <= 1.0)) throw InputError("power factor must lie in (0,1]");
  if (pf == 1.0) return 0.0;
  return p * std::tan(std::acos(pf));
}

}  // namespace lem
