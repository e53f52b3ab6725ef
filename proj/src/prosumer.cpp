#include "lem/prosumer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace lem::prosumer {

using socp::ProgramBuilder;

ProsumerInput ProsumerInput::priced(const std::vector<double>& price, double dt) {
  ProsumerInput in;
  in.lambda_lem = price;
  in.p_tilde.assign(price.size(), 0.0);
  in.lambda_p.assign(price.size(), 0.0);
  in.rho = 0.0;
  in.dt = dt;
  return in;
}

double pv_cap(const PvUnit& pv, int t) {
  return std::max(0.0, std::min(pv.p_forecast.at(t), pv.pf * pv.s_inv));
}

double soc_step(double soc_prev, double p_ch, double p_dch, const StorageDevice& dev, double dt) {
  return soc_prev + (dev.eta_ch * p_ch - p_dch / dev.eta_dch) * dt;
}

namespace {

std::string tag(const Prosumer& p) { return "prosumer " + std::to_string(p.id); }

void check_input(const Prosumer& pros, const ProsumerInput& in) {
  const std::size_t T = pros.baseline_load.size();
  if (T == 0) throw InputError(tag(pros) + ": empty horizon");
  if (in.lambda_lem.size() != T || in.p_tilde.size() != T || in.lambda_p.size() != T)
    throw InputError(tag(pros) + ": input signals do not cover the horizon");
  if (!(in.dt > 0.0)) throw InputError(tag(pros) + ": dt must be positive");
  if (!(in.rho >= 0.0)) throw InputError(tag(pros) + ": rho must be non-negative");
  for (const PvUnit& u : pros.pvs)
    if (u.p_forecast.size() != T) throw InputError(tag(pros) + ": pv forecast does not cover the horizon");
  for (const FlexibleLoad& f : pros.fls)
    if (f.p_fl_max.size() != T) throw InputError(tag(pros) + ": fl limit does not cover the horizon");
  for (std::size_t s = 0; s < pros.storages.size(); ++s) {
    const StorageDevice& d = pros.storages[s];
    const std::string st = tag(pros) + " storage " + std::to_string(s);
    if (d.t_arrive < 0 || d.t_depart >= static_cast<int>(T) || d.t_arrive > d.t_depart)
      throw InputError(st + ": window outside horizon");
    if (!(d.eta_ch > 0.0) || !(d.eta_dch > 0.0)) throw InputError(st + ": efficiencies must be positive");
    // Highest energy reachable at departure.
    const double reach = std::min(d.soc_max, d.e0 + d.eta_ch * d.p_ch_max * d.window_length() * in.dt);
    if (d.e_trip > reach + 1e-9)
      throw InputError(st + ": trip energy " + std::to_string(d.e_trip) + " exceeds reachable energy " +
                       std::to_string(reach) + " at hour " + std::to_string(d.t_depart));
    if (d.soc_min > d.soc_max) throw InputError(st + ": soc_min above soc_max");
  }
  for (std::size_t f = 0; f < pros.fls.size(); ++f) {
    const FlexibleLoad& fl = pros.fls[f];
    // Best case: raise consumption in the t_max hours with the largest limits.
    std::vector<double> lim = fl.p_fl_max;
    std::sort(lim.begin(), lim.end(), std::greater<>());
    double best = 0.0;
    for (std::size_t t = 0; t < T; ++t) best += pros.baseline_load[t] * in.dt;
    for (int k = 0; k < fl.t_max && k < static_cast<int>(T); ++k) best += lim[k] * in.dt;
    if (fl.e_min > best + 1e-9)
      throw InputError(tag(pros) + " fl " + std::to_string(f) + ": energy floor " + std::to_string(fl.e_min) +
                       " unreachable (at most " + std::to_string(best) + ")");
  }
}

}  // namespace

SubproblemLayout append_prosumer(ProgramBuilder& b, miqp::MixedBinaryProgram& mbp, const Prosumer& pros,
                                 const ProsumerInput& in) {
  check_input(pros, in);
  const int T = static_cast<int>(pros.baseline_load.size());
  const double dt = in.dt;
  SubproblemLayout L;
  L.T = T;

  // Net-power rows: p_net - [contributions] = baseline.
  L.p_net.resize(T);
  std::vector<int> net_row(T);
  for (int t = 0; t < T; ++t) {
    L.p_net[t] = b.add_free();
    net_row[t] = b.add_row({{L.p_net[t], 1.0}}, pros.baseline_load[t]);
    // lambda_lem*p*dt + lambda_p*(pt - p) + rho/2*(pt - p)^2
    b.add_linear(L.p_net[t], in.lambda_lem[t] * dt - in.lambda_p[t] - in.rho * in.p_tilde[t]);
    b.add_quadratic(L.p_net[t], in.rho);
    b.add_offset(in.lambda_p[t] * in.p_tilde[t] + 0.5 * in.rho * in.p_tilde[t] * in.p_tilde[t]);
  }

  auto upper = [&](int var, double cap) { b.add_row({{var, 1.0}, {b.add_nonneg(), 1.0}}, cap); };
  auto binary = [&](int var) { mbp.binary_indices.push_back(var); };

  for (const PvUnit& u : pros.pvs) {
    std::vector<int> idx(T);
    for (int t = 0; t < T; ++t) {
      idx[t] = b.add_nonneg();
      upper(idx[t], pv_cap(u, t));
      b.add_to_row(net_row[t], idx[t], 1.0);
    }
    L.p_pv.push_back(std::move(idx));
  }

  for (const StorageDevice& d : pros.storages) {
    SubproblemLayout::StorageVars v;
    v.p_ch.assign(T, -1);
    v.p_dch.assign(T, -1);
    v.x_ch.assign(T, -1);
    v.x_dch.assign(T, -1);
    v.soc.assign(T, -1);
    for (int t = d.t_arrive; t <= d.t_depart; ++t) {
      v.p_ch[t] = b.add_nonneg();
      v.p_dch[t] = b.add_nonneg();
      v.x_ch[t] = b.add_nonneg();
      v.x_dch[t] = b.add_nonneg();
      v.soc[t] = b.add_nonneg();
      binary(v.x_ch[t]);
      binary(v.x_dch[t]);
      b.add_row({{v.x_ch[t], 1.0}, {v.x_dch[t], 1.0}, {b.add_nonneg(), 1.0}}, 1.0);
      b.add_row({{v.p_ch[t], 1.0}, {v.x_ch[t], -d.p_ch_max}, {b.add_nonneg(), 1.0}}, 0.0);
      b.add_row({{v.p_dch[t], 1.0}, {v.x_dch[t], -d.p_dch_max}, {b.add_nonneg(), 1.0}}, 0.0);
      mbp.gates.push_back({v.x_ch[t], v.p_ch[t]});
      mbp.gates.push_back({v.x_dch[t], v.p_dch[t]});
      mbp.exclusive.push_back({v.x_ch[t], v.x_dch[t]});

      // soc_t - soc_{t-1} - (eta_ch p_ch - p_dch/eta_dch) dt = 0, soc_{a-1} = e0
      std::vector<std::pair<int, double>> row{
          {v.soc[t], 1.0}, {v.p_ch[t], -d.eta_ch * dt}, {v.p_dch[t], dt / d.eta_dch}};
      if (t > d.t_arrive) row.emplace_back(v.soc[t - 1], -1.0);
      b.add_row(row, t == d.t_arrive ? d.e0 : 0.0);
      upper(v.soc[t], d.soc_max);
      if (d.soc_min > 0.0) b.add_row({{v.soc[t], 1.0}, {b.add_nonneg(), -1.0}}, d.soc_min);

      b.add_to_row(net_row[t], v.p_ch[t], -1.0);
      b.add_to_row(net_row[t], v.p_dch[t], 1.0);
      b.add_linear(v.p_ch[t], d.throughput_cost * dt);
      b.add_linear(v.p_dch[t], d.throughput_cost * dt);
    }
    if (d.e_trip > 0.0) b.add_row({{v.soc[d.t_depart], 1.0}, {b.add_nonneg(), -1.0}}, d.e_trip);
    L.storages.push_back(std::move(v));
  }

  for (const FlexibleLoad& f : pros.fls) {
    SubproblemLayout::FlVars v;
    v.up.resize(T);
    v.down.resize(T);
    v.y.resize(T);
    miqp::Cardinality card;
    card.limit = f.t_max;
    // sum_t (up - down) dt + s = sum_t baseline dt - e_min
    std::vector<std::pair<int, double>> energy;
    double energy_rhs = -f.e_min;
    for (int t = 0; t < T; ++t) {
      v.up[t] = b.add_nonneg();
      v.down[t] = b.add_nonneg();
      v.y[t] = b.add_nonneg();
      binary(v.y[t]);
      upper(v.y[t], 1.0);
      b.add_row({{v.up[t], 1.0}, {v.y[t], -f.p_fl_max[t]}, {b.add_nonneg(), 1.0}}, 0.0);
      b.add_row({{v.down[t], 1.0}, {v.y[t], -f.p_fl_max[t]}, {b.add_nonneg(), 1.0}}, 0.0);
      mbp.gates.push_back({v.y[t], v.up[t]});
      mbp.gates.push_back({v.y[t], v.down[t]});
      card.binaries.push_back(v.y[t]);
      b.add_to_row(net_row[t], v.up[t], 1.0);
      b.add_to_row(net_row[t], v.down[t], -1.0);
      b.add_linear(v.up[t], f.discomfort_cost * dt);
      b.add_linear(v.down[t], f.discomfort_cost * dt);
      energy.emplace_back(v.up[t], dt);
      energy.emplace_back(v.down[t], -dt);
      energy_rhs += pros.baseline_load[t] * dt;
    }
    if (f.e_min > 0.0) {
      energy.emplace_back(b.add_nonneg(), 1.0);
      b.add_row(energy, energy_rhs);
    }
    std::vector<std::pair<int, double>> count;
    for (int y : card.binaries) count.emplace_back(y, 1.0);
    count.emplace_back(b.add_nonneg(), 1.0);
    b.add_row(count, f.t_max);
    mbp.cardinality.push_back(std::move(card));
    L.fls.push_back(std::move(v));
  }
  return L;
}

Subproblem build_subproblem(const Prosumer& pros, const ProsumerInput& in) {
  ProgramBuilder b;
  Subproblem out;
  out.layout = append_prosumer(b, out.program, pros, in);
  out.program.relaxation = b.build();
  return out;
}

ProsumerSchedule extract_schedule(const Prosumer& pros, const ProsumerInput& in, const SubproblemLayout& L,
                                  const Eigen::VectorXd& x, bool round_binaries) {
  const int T = L.T;
  auto bin = [&](int j) { return round_binaries ? std::round(x[j]) : std::clamp(x[j], 0.0, 1.0); };
  // A rounded-off binary switches its gated power off; a fractional one keeps it.
  auto gated = [&](int p, double b) { return std::max(0.0, x[p]) * (round_binaries ? b : 1.0); };
  ProsumerSchedule s;
  s.prosumer_id = pros.id;
  s.p_g.assign(T, 0.0);
  s.p_l = pros.baseline_load;
  for (const auto& idx : L.p_pv) {
    std::vector<double> p(T);
    for (int t = 0; t < T; ++t) {
      p[t] = std::max(0.0, x[idx[t]]);
      s.p_g[t] += p[t];
    }
    s.p_pv.push_back(std::move(p));
    s.q_pv.emplace_back(T, 0.0);
  }
  for (std::size_t k = 0; k < L.storages.size(); ++k) {
    const auto& v = L.storages[k];
    const StorageDevice& d = pros.storages[k];
    StorageSchedule ss;
    ss.p_ch.assign(T, 0.0);
    ss.p_dch.assign(T, 0.0);
    ss.x_ch.assign(T, 0.0);
    ss.x_dch.assign(T, 0.0);
    ss.soc.assign(T, d.e0);
    for (int t = 0; t < T; ++t) {
      if (v.soc[t] < 0) {
        if (t > d.t_depart) ss.soc[t] = ss.soc[d.t_depart];
        continue;
      }
      ss.x_ch[t] = bin(v.x_ch[t]);
      ss.x_dch[t] = bin(v.x_dch[t]);
      ss.p_ch[t] = gated(v.p_ch[t], ss.x_ch[t]);
      ss.p_dch[t] = gated(v.p_dch[t], ss.x_dch[t]);
      ss.soc[t] = x[v.soc[t]];
      s.p_l[t] += ss.p_ch[t];
      s.p_g[t] += ss.p_dch[t];
    }
    s.storages.push_back(std::move(ss));
  }
  for (const auto& v : L.fls) {
    FlSchedule fs;
    fs.p_fl.assign(T, 0.0);
    fs.y_fl.assign(T, 0.0);
    for (int t = 0; t < T; ++t) {
      fs.y_fl[t] = bin(v.y[t]);
      fs.p_fl[t] = gated(v.up[t], fs.y_fl[t]) - gated(v.down[t], fs.y_fl[t]);
      s.p_l[t] -= fs.p_fl[t];
    }
    s.fls.push_back(std::move(fs));
  }
  s.p_net.resize(T);
  for (int t = 0; t < T; ++t) s.p_net[t] = s.p_l[t] - s.p_g[t];
  s.cost_devices = device_cost(pros, s, in.dt);
  s.cost_energy = 0.0;
  for (int t = 0; t < T; ++t) s.cost_energy += s.p_net[t] * in.lambda_lem[t] * in.dt;
  s.objective = subproblem_objective(pros, in, s);
  return s;
}

double device_cost(const Prosumer& pros, const ProsumerSchedule& s, double dt) {
  double c = 0.0;
  for (std::size_t k = 0; k < s.storages.size(); ++k)
    for (std::size_t t = 0; t < s.storages[k].p_ch.size(); ++t)
      c += pros.storages[k].throughput_cost * (s.storages[k].p_ch[t] + s.storages[k].p_dch[t]) * dt;
  for (std::size_t f = 0; f < s.fls.size(); ++f)
    for (double p : s.fls[f].p_fl) c += pros.fls[f].discomfort_cost * std::abs(p) * dt;
  return c;
}

double subproblem_objective(const Prosumer& pros, const ProsumerInput& in, const ProsumerSchedule& s) {
  double obj = device_cost(pros, s, in.dt);
  for (std::size_t t = 0; t < s.p_net.size(); ++t) {
    const double d = in.p_tilde[t] - s.p_net[t];
    obj += s.p_net[t] * in.lambda_lem[t] * in.dt + in.lambda_p[t] * d + 0.5 * in.rho * d * d;
  }
  return obj;
}

ProsumerSchedule solve_subproblem_III(const Prosumer& pros, const ProsumerInput& in, const ProsumerOptions& opts) {
  Subproblem sp = build_subproblem(pros, in);
  Eigen::VectorXd x;
  double obj = 0.0;
  socp::SolveStatus status;
  int nodes = 0;
  double gap = 0.0;
  bool fell_back = false;
  if (opts.mode == SolveMode::Exact) {
    auto r = miqp::solve_mbp(sp.program, opts.bnb);
    status = r.has_incumbent ? socp::SolveStatus::Optimal : r.status;
    x = r.x;
    obj = r.obj;
    nodes = r.nodes;
    gap = r.gap;
  } else {
    auto r = miqp::relax_and_repair(sp.program, opts.bnb);
    status = r.status;
    x = r.x;
    obj = r.obj;
    nodes = r.nodes;
    fell_back = r.fell_back;
    // Measured against the relaxation, so it bounds the true gap.
    gap = std::max(0.0, r.obj - r.relaxed_obj) / (1.0 + std::abs(r.obj));
  }
  if (status != socp::SolveStatus::Optimal || x.size() == 0) {
    std::ostringstream os;
    os << tag(pros) << ": subproblem " << socp::to_string(status) << " over hours 0.." << sp.layout.T - 1;
    for (std::size_t k = 0; k < pros.storages.size(); ++k)
      os << "; storage " << k << " window " << pros.storages[k].t_arrive << ".." << pros.storages[k].t_depart;
    throw ProsumerSolveError(os.str());
  }
  ProsumerSchedule s = extract_schedule(pros, in, sp.layout, x);
  s.solver_objective = obj;
  s.nodes = nodes;
  s.gap = gap;
  s.fell_back = fell_back;
  return s;
}

std::string ScheduleViolation::describe() const {
  std::ostringstream os;
  os << constraint;
  if (device >= 0) os << " device " << device;
  if (t >= 0) os << " hour " << t;
  os << ": value " << value << " limit " << limit;
  return os.str();
}

std::vector<ScheduleViolation> validate_schedule(const Prosumer& pros, const ProsumerSchedule& s, double dt,
                                                 double tol) {
  std::vector<ScheduleViolation> v;
  const int T = static_cast<int>(pros.baseline_load.size());
  auto flag = [&](const char* what, int dev, int t, double value, double limit) {
    v.push_back({what, dev, t, value, limit});
  };
  auto at = [](const std::vector<double>& a, int t) { return t < static_cast<int>(a.size()) ? a[t] : 0.0; };
  auto is_binary = [&](double b) { return std::abs(b) <= tol || std::abs(b - 1.0) <= tol; };

  std::vector<double> pl = pros.baseline_load, pg(T, 0.0), fl_total(T, 0.0);
  for (std::size_t u = 0; u < pros.pvs.size(); ++u)
    for (int t = 0; t < T; ++t) {
      const double p = at(s.p_pv.at(u), t);
      if (p < -tol || p > pv_cap(pros.pvs[u], t) + tol) flag("pv", static_cast<int>(u), t, p, pv_cap(pros.pvs[u], t));
      pg[t] += p;
    }
  for (std::size_t k = 0; k < pros.storages.size(); ++k) {
    const StorageDevice& d = pros.storages[k];
    const StorageSchedule& ss = s.storages.at(k);
    const int dev = static_cast<int>(k);
    double prev = d.e0;
    for (int t = 0; t < T; ++t) {
      const double pc = at(ss.p_ch, t), pd = at(ss.p_dch, t), xc = at(ss.x_ch, t), xd = at(ss.x_dch, t);
      pl[t] += pc;
      pg[t] += pd;
      if (!d.in_window(t)) {
        if (std::abs(pc) > tol || std::abs(pd) > tol || std::abs(xc) > tol || std::abs(xd) > tol)
          flag("window", dev, t, std::max({std::abs(pc), std::abs(pd), std::abs(xc), std::abs(xd)}), 0.0);
        continue;
      }
      if (!is_binary(xc)) flag("binary", dev, t, xc, 1.0);
      if (!is_binary(xd)) flag("binary", dev, t, xd, 1.0);
      if (xc + xd > 1.0 + tol) flag("exclusive", dev, t, xc + xd, 1.0);
      if (pc < -tol || pc > xc * d.p_ch_max + tol) flag("gate", dev, t, pc, xc * d.p_ch_max);
      if (pd < -tol || pd > xd * d.p_dch_max + tol) flag("gate", dev, t, pd, xd * d.p_dch_max);
      const double expect = soc_step(prev, pc, pd, d, dt);
      const double soc = at(ss.soc, t);
      if (std::abs(soc - expect) > tol) flag("soc_step", dev, t, soc, expect);
      if (soc < d.soc_min - tol) flag("soc_bounds", dev, t, soc, d.soc_min);
      if (soc > d.soc_max + tol) flag("soc_bounds", dev, t, soc, d.soc_max);
      prev = soc;
    }
    const double dep = at(ss.soc, d.t_depart);
    if (dep < d.e_trip - tol) flag("trip", dev, d.t_depart, dep, d.e_trip);
  }
  for (std::size_t f = 0; f < pros.fls.size(); ++f) {
    const FlexibleLoad& fl = pros.fls[f];
    const FlSchedule& fs = s.fls.at(f);
    const int dev = static_cast<int>(f);
    double count = 0.0, energy = 0.0;
    for (int t = 0; t < T; ++t) {
      const double p = at(fs.p_fl, t), y = at(fs.y_fl, t);
      if (!is_binary(y)) flag("binary", dev, t, y, 1.0);
      if (std::abs(p) > y * fl.p_fl_max[t] + tol) flag("fl_bounds", dev, t, p, y * fl.p_fl_max[t]);
      count += y;
      energy += (pros.baseline_load[t] - p) * dt;
      pl[t] -= p;
    }
    if (count > fl.t_max + tol) flag("fl_count", dev, -1, count, fl.t_max);
    if (energy < fl.e_min - tol) flag("fl_energy", dev, -1, energy, fl.e_min);
  }
  for (int t = 0; t < T; ++t) {
    const double net = at(s.p_net, t);
    const double scale = 1.0 + std::abs(pl[t]) + std::abs(pg[t]);
    if (std::abs(net - (pl[t] - pg[t])) > tol * scale) flag("net", -1, t, net, pl[t] - pg[t]);
    if (std::abs(at(s.p_l, t) - pl[t]) > tol * scale) flag("net", -1, t, at(s.p_l, t), pl[t]);
    if (std::abs(at(s.p_g, t) - pg[t]) > tol * scale) flag("net", -1, t, at(s.p_g, t), pg[t]);
  }
  return v;
}

}  // namespace lem::prosumer
