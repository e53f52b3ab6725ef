#pragma once

#include "lem/model.hpp"

#include <cmath>
#include <vector>

namespace lem::testing {

// Small per-unit feeder with a few prosumers owning every device kind.
//   1(PCC) - 2 - 3 - 4,  3 - 5,  2 - 6
inline Scenario small_market(int T = 4, int n_prosumers = 4) {
  Scenario sc;
  sc.name = "small";
  sc.units = UnitSystem::PerUnit;
  sc.horizon = T;
  sc.dt = 1.0;
  auto& net = sc.network;
  for (int id = 1; id <= 6; ++id) {
    Bus b;
    b.id = id;
    b.is_pcc = id == 1;
    b.vmin = 0.9;
    b.vmax = 1.1;
    if (id == 4 || id == 6) {
      b.p_load = 0.1;
      b.q_load = 0.04;
    }
    net.buses.push_back(b);
  }
  const int links[5][2] = {{1, 2}, {2, 3}, {3, 4}, {3, 5}, {2, 6}};
  for (const auto& l : links) {
    Line ln;
    ln.from_bus = l[0];
    ln.to_bus = l[1];
    ln.r = 0.01;
    ln.x = 0.02;
    ln.s_max = 3.0;
    net.lines.push_back(ln);
  }
  for (int t = 0; t < T; ++t) {
    const double phase = 2.0 * M_PI * t / T;
    sc.profiles.wem_price.push_back(40.0 + 20.0 * std::sin(phase));
    sc.profiles.loss_cost.push_back(60.0);
    sc.profiles.load_scale.push_back(0.8 + 0.2 * std::cos(phase));
    sc.profiles.pv_cf.push_back(std::max(0.0, std::sin(phase)));
  }
  const int hosts[6] = {3, 4, 5, 6, 4, 5};
  for (int a = 0; a < n_prosumers; ++a) {
    Prosumer p;
    p.id = a + 1;
    p.bus_id = hosts[a % 6];
    p.peak_load = 0.2 + 0.03 * a;
    p.pf_load = 0.95;
    PvUnit pv;
    pv.capacity = 0.2;
    pv.s_inv = 0.25;
    pv.pf = 0.95;
    p.pvs.push_back(pv);
    StorageDevice b;
    b.kind = StorageKind::Bess;
    b.p_ch_max = b.p_dch_max = 0.1;
    b.eta_ch = b.eta_dch = 0.95;
    b.soc_max = 0.3;
    b.e0 = 0.1;
    b.t_arrive = 0;
    b.t_depart = T - 1;
    b.throughput_cost = 1.0;
    p.storages.push_back(b);
    if (a % 2 == 0) {
      StorageDevice ev;
      ev.kind = StorageKind::Ev;
      ev.p_ch_max = ev.p_dch_max = 0.08;
      ev.eta_ch = ev.eta_dch = 0.9;
      ev.soc_max = 0.4;
      ev.e0 = 0.05;
      ev.e_trip = 0.15;
      ev.t_arrive = 0;
      ev.t_depart = T - 1;
      ev.throughput_cost = 0.5;
      p.storages.push_back(ev);
    }
    FlexibleLoad fl;
    fl.max_share = 0.05;
    fl.t_max = 2;
    fl.discomfort_cost = 2.0;
    p.fls.push_back(fl);
    sc.prosumers.push_back(p);
  }
  materialize_profiles(sc);
  for (auto& p : sc.prosumers) {
    double e = 0.0;
    for (double l : p.baseline_load) e += l * sc.dt;
    p.fls[0].e_min = 0.95 * e;
  }
  return sc;
}

}  // namespace lem::testing
