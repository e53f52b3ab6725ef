#include "doctest.h"
#include "lem/prosumer.hpp"

#include <cmath>
#include <functional>
#include <random>

using namespace lem;
using namespace lem::prosumer;

namespace {

Prosumer bare(int T, double load) {
  Prosumer p;
  p.id = 7;
  p.bus_id = 1;
  p.baseline_load.assign(T, load);
  return p;
}

StorageDevice battery(int T, double p_max, double soc_max) {
  StorageDevice s;
  s.kind = StorageKind::Bess;
  s.p_ch_max = s.p_dch_max = p_max;
  s.soc_max = soc_max;
  s.t_arrive = 0;
  s.t_depart = T - 1;
  return s;
}

double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// Small random prosumer with every device kind.
Prosumer random_prosumer(std::mt19937_64& rng, int T) {
  std::uniform_real_distribution<double> u(0, 1);
  Prosumer p = bare(T, 0.0);
  for (int t = 0; t < T; ++t) p.baseline_load[t] = 0.5 + u(rng);
  p.pf_load = 0.9;
  PvUnit pv;
  pv.s_inv = 1.0 + u(rng);
  pv.pf = 0.9;
  for (int t = 0; t < T; ++t) pv.p_forecast.push_back(1.5 * u(rng));
  p.pvs.push_back(pv);
  StorageDevice b = battery(T, 0.5 + u(rng), 1.0 + 2 * u(rng));
  b.eta_ch = 0.9 + 0.1 * u(rng);
  b.eta_dch = 0.9 + 0.1 * u(rng);
  b.e0 = 0.3 * b.soc_max;
  b.throughput_cost = 0.05 * u(rng);
  p.storages.push_back(b);
  StorageDevice ev;
  ev.kind = StorageKind::Ev;
  ev.p_ch_max = ev.p_dch_max = 1.0;
  ev.eta_ch = ev.eta_dch = 0.95;
  ev.soc_max = 3.0;
  ev.t_arrive = static_cast<int>(rng() % 2);
  ev.t_depart = T - 1 - static_cast<int>(rng() % 2);
  ev.e0 = 0.5;
  ev.e_trip = 1.5;
  p.storages.push_back(ev);
  FlexibleLoad fl;
  fl.max_share = 0.3;
  for (int t = 0; t < T; ++t) fl.p_fl_max.push_back(0.3 * p.baseline_load[t]);
  fl.t_max = 2;
  fl.e_min = 0.95 * sum(p.baseline_load);
  fl.discomfort_cost = 0.1 * u(rng);
  p.fls.push_back(fl);
  return p;
}

ProsumerInput random_input(std::mt19937_64& rng, int T) {
  std::uniform_real_distribution<double> u(0, 1);
  ProsumerInput in;
  in.dt = 1.0;
  in.rho = 0.5 * u(rng);
  for (int t = 0; t < T; ++t) {
    in.lambda_lem.push_back(1.0 + 3.0 * u(rng));
    in.p_tilde.push_back(u(rng) - 0.2);
    in.lambda_p.push_back(u(rng) - 0.5);
  }
  return in;
}

}  // namespace

TEST_CASE("soc recursion") {
  StorageDevice d;
  d.eta_ch = d.eta_dch = 0.95;
  CHECK(soc_step(0.0, 10.0, 0.0, d, 1.0) == doctest::Approx(9.5).epsilon(1e-15));
  CHECK(soc_step(9.5, 0.0, 9.5 * 0.95, d, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(soc_step(3.25, 0.0, 0.0, d, 1.0) == 3.25);
}

TEST_CASE("prosumer without devices passes its load through") {
  Prosumer p = bare(4, 0.8);
  auto in = ProsumerInput::priced({1, 2, 3, 4}, 1.0);
  auto sp = build_subproblem(p, in);
  CHECK(sp.program.binary_indices.empty());
  auto s = solve_subproblem_III(p, in);
  for (int t = 0; t < 4; ++t) CHECK(s.p_net[t] == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(s.cost_energy == doctest::Approx(0.8 * 10));
  CHECK(s.cost_devices == 0.0);
}

TEST_CASE("binary count follows the device windows") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const int T = 4 + static_cast<int>(rng() % 21);
    Prosumer p = random_prosumer(rng, T);
    std::size_t expect = 0;
    for (const auto& s : p.storages) expect += 2 * static_cast<std::size_t>(s.window_length());
    expect += p.fls.size() * static_cast<std::size_t>(T);
    CHECK(build_subproblem(p, random_input(rng, T)).program.binary_indices.size() == expect);
  }
}

TEST_CASE("statically infeasible devices are rejected at build time") {
  Prosumer p = bare(24, 1.0);
  StorageDevice ev;
  ev.kind = StorageKind::Ev;
  ev.p_ch_max = 4;
  ev.soc_max = 20;
  ev.t_arrive = 18;
  ev.t_depart = 19;
  ev.e_trip = 9;  // two hours at 4 reach only 8
  p.storages.push_back(ev);
  auto in = ProsumerInput::priced(std::vector<double>(24, 1.0), 1.0);
  CHECK_THROWS_WITH_AS(build_subproblem(p, in), doctest::Contains("trip energy"), InputError);
  p.storages[0].e_trip = 8;
  p.storages[0].soc_max = 7;
  CHECK_THROWS_AS(build_subproblem(p, in), InputError);

  Prosumer q = bare(3, 1.0);
  FlexibleLoad fl;
  fl.p_fl_max = {0.5, 0.2, 0.1};
  fl.t_max = 1;
  fl.e_min = 3.6;
  q.fls.push_back(fl);
  auto in3 = ProsumerInput::priced({1, 1, 1}, 1.0);
  CHECK_THROWS_WITH_AS(build_subproblem(q, in3), doctest::Contains("energy floor"), InputError);
  q.fls[0].e_min = 3.5;
  CHECK_NOTHROW(build_subproblem(q, in3));
  CHECK_THROWS_AS(build_subproblem(q, ProsumerInput::priced({1, 1}, 1.0)), InputError);
}

TEST_CASE("EV charges exactly the trip energy at flat prices") {
  const int T = 24;
  Prosumer p = bare(T, 0.0);
  StorageDevice ev;
  ev.kind = StorageKind::Ev;
  ev.p_ch_max = ev.p_dch_max = 4;
  ev.soc_max = 20;
  ev.t_arrive = 18;
  ev.t_depart = 22;
  ev.e_trip = 8;
  ev.throughput_cost = 0.01;
  p.storages.push_back(ev);
  auto in = ProsumerInput::priced(std::vector<double>(T, 30.0), 1.0);
  auto s = solve_subproblem_III(p, in);
  CHECK(sum(s.storages[0].p_ch) == doctest::Approx(8.0).epsilon(1e-7));
  CHECK(sum(s.storages[0].p_dch) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(s.storages[0].soc[22] >= 8.0 - 1e-6);
  CHECK(validate_schedule(p, s, 1.0).empty());

  // Enumerate integral charge profiles in the window: every feasible one
  // charges at least 8 and the cheapest costs exactly 8 units of energy.
  double best = 1e300;
  std::vector<int> prof(5, 0);
  std::function<void(int)> rec = [&](int h) {
    if (h == 5) {
      int e = 0;
      for (int x : prof) e += x;
      if (e < 8) return;
      best = std::min(best, e * (30.0 + 0.01));
      return;
    }
    for (int x = 0; x <= 4; ++x) {
      prof[h] = x;
      rec(h + 1);
    }
  };
  rec(0);
  CHECK(best == doctest::Approx(8 * 30.01));
  CHECK(s.solver_objective == doctest::Approx(best).epsilon(1e-7));
}

TEST_CASE("storage idles at flat prices when cycling costs") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 5; ++k) {
    const int T = 6;
    Prosumer p = bare(T, 1.0);
    StorageDevice b = battery(T, 1.0, 3.0);
    b.eta_ch = 0.95;
    b.eta_dch = 0.9;
    b.throughput_cost = 0.01 + 0.1 * (rng() % 10) / 10.0;
    p.storages.push_back(b);
    auto s = solve_subproblem_III(p, ProsumerInput::priced(std::vector<double>(T, 5.0), 1.0));
    for (int t = 0; t < T; ++t) {
      CHECK(std::abs(s.storages[0].p_ch[t]) <= 1e-7);
      CHECK(std::abs(s.storages[0].p_dch[t]) <= 1e-7);
    }
  }
}

TEST_CASE("battery arbitrage between valley and peak") {
  const int T = 24;
  Prosumer p = bare(T, 2.0);
  StorageDevice b = battery(T, 1.0, 1.0);
  b.throughput_cost = 0.5;
  p.storages.push_back(b);
  std::vector<double> price(T, 50.0);
  price[3] = 10.0;
  price[19] = 100.0;
  for (SolveMode mode : {SolveMode::Exact, SolveMode::RelaxRepair}) {
    ProsumerOptions opts;
    opts.mode = mode;
    auto s = solve_subproblem_III(p, ProsumerInput::priced(price, 1.0), opts);
    const auto& st = s.storages[0];
    for (int t = 0; t < T; ++t) {
      CHECK(std::abs(st.p_ch[t] - (t == 3 ? 1.0 : 0.0)) <= 1e-6);
      CHECK(std::abs(st.p_dch[t] - (t == 19 ? 1.0 : 0.0)) <= 1e-6);
    }
    CHECK(s.solver_objective == doctest::Approx(2.0 * (50.0 * 22 + 10 + 100) + 10 - 100 + 1.0).epsilon(1e-8));
  }
}

TEST_CASE("large consensus weight pulls the net power to the target") {
  std::mt19937_64 rng(8);
  const int T = 6;
  Prosumer p = random_prosumer(rng, T);
  ProsumerInput in = random_input(rng, T);
  in.rho = 1e4;
  for (int t = 0; t < T; ++t) in.p_tilde[t] = 0.2 + 0.1 * t;
  auto s = solve_subproblem_III(p, in);
  for (int t = 0; t < T; ++t) CHECK(std::abs(s.p_net[t] - in.p_tilde[t]) <= 1e-3);
}

TEST_CASE("schedule validation") {
  std::mt19937_64 rng(4);
  const int T = 6;
  Prosumer p = random_prosumer(rng, T);
  auto in = random_input(rng, T);
  auto s = solve_subproblem_III(p, in);
  REQUIRE(validate_schedule(p, s, in.dt).empty());

  SUBCASE("corrupted soc") {
    auto bad = s;
    bad.storages[0].soc[3] += 0.1;
    auto v = validate_schedule(p, bad, in.dt);
    REQUIRE(!v.empty());
    CHECK(v[0].constraint == "soc_step");
    CHECK(v[0].t == 3);
    CHECK(v[0].device == 0);
  }
  SUBCASE("too many flexible-load changes") {
    auto bad = s;
    for (int t = 0; t < T; ++t) bad.fls[0].y_fl[t] = 1.0;
    auto v = validate_schedule(p, bad, in.dt);
    bool found = false;
    for (const auto& e : v) found = found || e.constraint == "fl_count";
    CHECK(found);
  }
  SUBCASE("simultaneous charge and discharge") {
    auto bad = s;
    bad.storages[0].x_ch[1] = bad.storages[0].x_dch[1] = 1.0;
    auto v = validate_schedule(p, bad, in.dt);
    REQUIRE(!v.empty());
    CHECK(v[0].constraint == "exclusive");
  }
  SUBCASE("net identity") {
    auto bad = s;
    bad.p_net[2] += 1e-3;
    auto v = validate_schedule(p, bad, in.dt);
    REQUIRE(v.size() == 1);
    CHECK(v[0].constraint == "net");
    CHECK(v[0].t == 2);
  }
}

TEST_CASE("random prosumers: feasibility, guarantees and objective consistency") {
  std::mt19937_64 rng(99);
  for (int k = 0; k < 12; ++k) {
    const int T = 4 + static_cast<int>(rng() % 3);
    Prosumer p = random_prosumer(rng, T);
    auto in = random_input(rng, T);
    ProsumerOptions exact;
    ProsumerOptions repair;
    repair.mode = SolveMode::RelaxRepair;
    auto a = solve_subproblem_III(p, in, exact);
    auto b = solve_subproblem_III(p, in, repair);
    for (const auto* s : {&a, &b}) {
      CHECK(validate_schedule(p, *s, in.dt).empty());
      for (int t = 0; t < T; ++t) CHECK(std::abs(s->p_net[t] - (s->p_l[t] - s->p_g[t])) <= 1e-9);
      for (std::size_t d = 0; d < p.storages.size(); ++d) {
        CHECK(s->storages[d].soc[p.storages[d].t_depart] >= p.storages[d].e_trip - 1e-6);
        for (int t = 0; t < T; ++t) CHECK(s->storages[d].x_ch[t] * s->storages[d].x_dch[t] == 0.0);
      }
      double energy = 0.0;
      for (int t = 0; t < T; ++t) energy += (p.baseline_load[t] - s->fls[0].p_fl[t]) * in.dt;
      CHECK(energy >= p.fls[0].e_min - 1e-6);
      CHECK(std::abs(s->objective - s->solver_objective) <= 1e-6 * (1 + std::abs(s->solver_objective)));
    }
    CHECK(b.solver_objective >= a.solver_objective - 1e-6 * (1 + std::abs(a.solver_objective)));
  }
}
