// Acceptance suite: one pass/fail line per criterion, exit status 1 when any
// criterion fails. Optional argument: a single criterion number to run.

#include "generators.hpp"
#include "lem/dso.hpp"
#include "lem/generator.hpp"
#include "lem/io.hpp"
#include "lem/market.hpp"
#include "lem/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <unistd.h>

using namespace lem;
namespace fs = std::filesystem;

namespace {

const fs::path kData = LEM_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int worker_count() { return static_cast<int>(std::clamp(std::thread::hardware_concurrency(), 1u, 8u)); }

// A distributed run with its scenario, message log and wall time. Runs are
// shared between criteria and computed on first use.
struct Run {
  Scenario scenario;  // as loaded, physical units
  market::ClearingResult result;
  double seconds = 0.0;
};

class Corpus {
 public:
  const Run& six_bus() {
    return cached("six_bus", [] {
      Scenario sc = io::load_scenario(kData / "scenarios/six_bus");
      sc.admm.eps1 = sc.admm.eps2 = 1e-6;
      return sc;
    });
  }
  const Run& ieee69() {
    return cached("ieee69", [] { return io::load_scenario(kData / "scenarios/ieee69"); });
  }
  const Run& penetration(double pen) {
    return cached("pen" + std::to_string(pen), [pen] {
      io::GeneratorSpec spec = io::load_generator_spec(kData / "generator/ieee69.json");
      spec.penetration = pen;
      return io::generate_scenario(spec);
    });
  }
  const oracle::OracleResult& selfish69() {
    if (!selfish69_) {
      prosumer::ProsumerOptions popts;
      selfish69_ = std::make_unique<oracle::OracleResult>(
          oracle::solve_selfish(ieee69().scenario, popts, {}, worker_count()));
    }
    return *selfish69_;
  }
  std::vector<const Run*> runs() const {
    std::vector<const Run*> out;
    for (const auto& [k, r] : runs_) out.push_back(r.get());
    return out;
  }

 private:
  const Run& cached(const std::string& key, const std::function<Scenario()>& make) {
    auto& slot = runs_[key];
    if (!slot) {
      slot = std::make_unique<Run>();
      slot->scenario = make();
      market::ClearingOptions opts;
      opts.log_messages = true;
      opts.threads = worker_count();
      opts.dso.threads = worker_count();
      const auto t0 = std::chrono::steady_clock::now();
      slot->result = market::run_clearing(slot->scenario, opts);
      slot->seconds = seconds_since(t0);
    }
    return *slot;
  }

  std::map<std::string, std::unique_ptr<Run>> runs_;
  std::unique_ptr<oracle::OracleResult> selfish69_;
};

// Every DSO input the run sent, rebuilt exactly as the DSO agent saw it.
std::vector<dso::DsoInput> logged_dso_inputs(const Run& run) {
  const Scenario pu = to_per_unit(run.scenario);
  const auto ratio = dso::reactive_ratio(pu);
  std::vector<dso::DsoInput> out;
  for (const auto& line : run.result.messages) {
    const auto msg = market::parse_message(line);
    const auto* m = std::get_if<market::LmoToDso>(&msg);
    if (!m) continue;
    dso::DsoInput in;
    in.p_net_node = m->p_net_node;
    in.q_net_node = dso::reactive_injections(ratio, m->p_net_node);
    in.p_loss_tilde = m->p_loss_tilde;
    in.lambda_loss = m->lambda_loss;
    in.loss_cost = pu.loss_cost();
    in.dt = pu.dt;
    in.rho_prime = pu.admm.rho_prime;
    out.push_back(std::move(in));
  }
  return out;
}

double hour_objective(const NetworkModel& net, const dso::DsoInput& in, int t) {
  socp::SolverOptions opts;
  opts.tol = 1e-11;
  const auto hp = dso::assemble_branch_flow(net, in, t);
  const auto sol = socp::solve_socp(hp.program, opts);
  if (sol.status != socp::SolveStatus::Optimal) throw std::runtime_error("probe solve failed");
  return sol.obj;
}

Outcome convex_equivalence(Corpus& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const Run& run = c.six_bus();
  if (run.result.status != market::Status::Converged) return {false, "distributed run did not converge"};
  const auto fixed = oracle::solve_centralized(run.scenario, &run.result);
  const double dist = run.result.costs.social();
  const double rel = std::abs(dist - fixed.objective) / (1.0 + std::abs(fixed.objective));
  const double secs = seconds_since(t0);
  return {rel <= 1e-3 && secs < 60.0, "distributed " + fmt("%.6f", dist) + ", oracle " + fmt("%.6f", fixed.objective) +
                                          ", relative gap " + fmt("%.2e", rel) + " (<= 1e-3), " + fmt("%.1f", secs) +
                                          " s (< 60)"};
}

Outcome convergence_envelope(Corpus& c) {
  const Run& run = c.ieee69();
  int max_inner = 0;
  for (const auto& o : run.result.trace.outer) max_inner = std::max(max_inner, o.inner_iterations);
  const bool ok = run.result.status == market::Status::Converged && run.result.outer_iterations <= 20 &&
                  max_inner <= 10 && run.seconds < 600.0;
  return {ok, market::to_string(run.result.status) + " after " + std::to_string(run.result.outer_iterations) +
                  " outer (<= 20), max " + std::to_string(max_inner) + " inner (<= 10), " +
                  fmt("%.1f", run.seconds) + " s (< 600)"};
}

Outcome dlmp_validity(Corpus& c) {
  const Run& run = c.six_bus();
  const auto inputs = logged_dso_inputs(run);
  if (inputs.empty()) return {false, "no DSO messages logged"};
  const dso::DsoInput& last = inputs.back();
  const NetworkModel net = to_per_unit(run.scenario).network;
  const auto& dlmp = run.result.dlmp;
  const int T = run.scenario.horizon;
  const std::size_t N = net.buses.size();
  const double h = 1e-5;
  double worst = 0.0;
  int probes = 0;
  for (int i = 0; i < 10; ++i) {
    const std::size_t n = 1 + static_cast<std::size_t>(i) % (N - 1);  // every non-PCC bus
    const int t = (7 * i + 3) % T;
    dso::DsoInput up = last, dn = last;
    up.p_net_node[n][t] += h;
    dn.p_net_node[n][t] -= h;
    const double fd = (hour_objective(net, up, t) - hour_objective(net, dn, t)) / (2.0 * h);
    const double reported = dlmp[n][t] * last.dt;
    worst = std::max(worst, std::abs(fd - reported) / std::abs(reported));
    ++probes;
  }
  return {probes == 10 && worst <= 1e-3,
          std::to_string(probes) + " probes, worst relative error " + fmt("%.2e", worst) + " (<= 1e-3)"};
}

Outcome relaxation_tightness(Corpus& c) {
  // Every DSO optimum reached in the runs: each logged DSO input re-solved,
  // plus the selfish network evaluation.
  c.six_bus();
  c.ieee69();
  for (double pen : {0.45, 0.60, 0.75}) c.penetration(pen);
  double worst = 0.0;
  int solves = 0, loose = 0;
  dso::DsoOptions opts;
  opts.threads = worker_count();
  for (const Run* run : c.runs()) {
    const NetworkModel net = to_per_unit(run->scenario).network;
    for (const auto& in : logged_dso_inputs(*run)) {
      const auto rep = dso::check_tightness(dso::solve_dso_subproblem(net, in, opts), 1e-6);
      worst = std::max(worst, rep.max_residual);
      loose += static_cast<int>(rep.loose.size());
      ++solves;
    }
  }
  const auto rep = dso::check_tightness(c.selfish69().network, 1e-6);
  worst = std::max(worst, rep.max_residual);
  loose += static_cast<int>(rep.loose.size());
  ++solves;
  return {loose == 0 && worst <= 1e-6, std::to_string(solves) + " DSO solves, max residual " + fmt("%.2e", worst) +
                                           " (<= 1e-6), " + std::to_string(loose) + " loose line-hours"};
}

Outcome directional_welfare(Corpus& c) {
  const auto& d = c.ieee69().result.costs;
  const auto& s = c.selfish69().costs;
  const double lmo_red = 100.0 * (s.lmo - d.lmo) / s.lmo;
  const double dso_red = 100.0 * (s.dso - d.dso) / s.dso;
  return {d.lmo <= s.lmo && d.dso <= s.dso,
          "LMO " + fmt("%.4f", d.lmo) + " vs selfish " + fmt("%.4f", s.lmo) + " (" + fmt("%.3f", lmo_red) +
              "% lower), DSO " + fmt("%.4f", d.dso) + " vs " + fmt("%.4f", s.dso) + " (" + fmt("%.3f", dso_red) +
              "% lower)"};
}

Outcome penetration_monotonicity(Corpus& c) {
  std::string detail;
  bool ok = true;
  double prev_lmo = INFINITY, prev_dso = INFINITY;
  for (double pen : {0.45, 0.60, 0.75}) {
    const Run& run = c.penetration(pen);
    const auto& k = run.result.costs;
    ok = ok && run.result.status == market::Status::Converged && k.lmo <= prev_lmo && k.dso <= prev_dso;
    prev_lmo = k.lmo;
    prev_dso = k.dso;
    detail += (detail.empty() ? "" : "; ") + fmt("%.0f%%", 100 * pen) + " (" +
              std::to_string(run.scenario.prosumers.size()) + " prosumers): LMO " + fmt("%.2f", k.lmo) + ", DSO " +
              fmt("%.2f", k.dso);
  }
  return {ok, detail};
}

Outcome privacy_audit(Corpus& c) {
  c.six_bus();
  c.ieee69();
  int lines = 0;
  for (const Run* run : c.runs()) {
    const auto rep = market::audit_privacy(run->result.messages);
    if (!rep.pass) return {false, "audit failed: " + rep.violations.front()};
    lines += static_cast<int>(run->result.messages.size());
  }
  // Instrumented leak: a prosumer reports its state of charge.
  auto leaky = c.six_bus().result.messages;
  for (auto& line : leaky) {
    auto j = nlohmann::json::parse(line);
    if (j["type"] == "ProsumerToLmo") {
      j["soc"] = std::vector<double>{0.5, 0.6};
      line = j.dump();
      break;
    }
  }
  const auto leak = market::audit_privacy(leaky);
  return {!leak.pass, std::to_string(lines) + " messages over " + std::to_string(c.runs().size()) +
                          " runs pass; leak fixture " + (leak.pass ? "passed (wrong)" : "rejected: " + leak.violations.front())};
}

Outcome feasibility(Corpus& c) {
  c.six_bus();
  c.ieee69();
  int schedules = 0;
  std::vector<std::string> bad;
  auto check = [&](const Scenario& sc, const std::vector<prosumer::ProsumerSchedule>& s) {
    const Scenario pu = to_per_unit(sc);
    for (std::size_t a = 0; a < s.size(); ++a) {
      for (const auto& v : prosumer::validate_schedule(pu.prosumers[a], s[a], pu.dt, 1e-6)) bad.push_back(v.describe());
      ++schedules;
    }
  };
  for (const Run* run : c.runs()) check(run->scenario, run->result.schedules);
  check(c.ieee69().scenario, c.selfish69().schedules);
  check(c.six_bus().scenario, oracle::solve_centralized(c.six_bus().scenario, &c.six_bus().result).schedules);
  return {bad.empty(), std::to_string(schedules) + " schedules, " + std::to_string(bad.size()) + " violations" +
                           (bad.empty() ? "" : ": " + bad.front())};
}

Outcome solver_suite(Corpus&) {
  std::mt19937 rng(20240611);
  double worst = 0.0;
  int solved = 0;
  for (int k = 0; k < 50; ++k) {
    const auto prog = testing::random_socp(rng, k % 2 == 1);
    socp::SolverOptions opts;
    opts.tol = 1e-8;
    const auto sol = socp::solve_socp(prog, opts);
    if (sol.status != socp::SolveStatus::Optimal) continue;
    ++solved;
    worst = std::max(worst, std::abs(sol.obj - sol.dual_obj) / (opts.tol * (1.0 + std::abs(sol.obj))));
  }
  std::mt19937_64 rng64(2024);
  int matched = 0, instances = 0;
  for (int k = 0; k < 24; ++k) {
    const int T = 2 + k % 3;  // 6, 9 or 12 binaries
    const auto p = testing::storage_instance(rng64, T);
    miqp::BnbOptions o;
    o.mip_gap = 1e-9;
    const auto r = miqp::solve_mbp(p, o);
    const double best = testing::enumerate(p);
    ++instances;
    if (r.status == socp::SolveStatus::Optimal && std::abs(r.obj - best) <= 1e-6 * (1.0 + std::abs(best))) ++matched;
  }
  return {solved == 50 && worst <= 10.0 && matched == instances,
          std::to_string(solved) + "/50 SOCPs optimal, worst duality gap " + fmt("%.2f", worst) +
              " x tol (<= 10); B&B matches enumeration on " + std::to_string(matched) + "/" +
              std::to_string(instances) + " instances"};
}

std::map<std::string, std::string> emitted(const Scenario& sc, const market::ClearingResult& r, const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("lem_acceptance_" + tag + "_" + std::to_string(::getpid()));
  io::emit_results(io::make_report(sc, r), dir);
  std::map<std::string, std::string> files;
  for (const char* f : {"dlmp.csv", "schedules.csv", "trace.csv", "summary.json"}) {
    std::ifstream in(dir / f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[f] = ss.str();
  }
  fs::remove_all(dir);
  return files;
}

Outcome determinism(Corpus& c) {
  int compared = 0;
  std::string diff;
  for (const char* name : {"six_bus", "ieee69"}) {
    const Run& ref = std::string(name) == "six_bus" ? c.six_bus() : c.ieee69();
    const auto expect = emitted(ref.scenario, ref.result, "ref");
    // Sequential solves, then a different worker count and chunking.
    for (int threads : {1, 3}) {
      market::ClearingOptions opts;
      opts.log_messages = true;
      opts.threads = threads;
      opts.dso.threads = threads;
      const auto again = market::run_clearing(ref.scenario, opts);
      const auto got = emitted(ref.scenario, again, "again");
      for (const auto& [f, text] : expect)
        if (got.at(f) != text && diff.empty()) diff = std::string(name) + " " + f + " with " + std::to_string(threads) + " threads";
      if (again.messages != ref.result.messages && diff.empty())
        diff = std::string(name) + " message log with " + std::to_string(threads) + " threads";
      ++compared;
    }
  }
  return {diff.empty(), std::to_string(compared) + " reruns at 1 and 3 workers against a " +
                            std::to_string(worker_count()) + "-worker reference" +
                            (diff.empty() ? ": traces, prices, schedules, summaries and message logs identical"
                                          : "; differs: " + diff)};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)(Corpus&);
};

const Criterion kCriteria[] = {
    {1, "convex equivalence", convex_equivalence},
    {2, "convergence envelope", convergence_envelope},
    {3, "DLMP validity", dlmp_validity},
    {4, "relaxation tightness", relaxation_tightness},
    {5, "directional welfare", directional_welfare},
    {6, "penetration monotonicity", penetration_monotonicity},
    {7, "privacy audit", privacy_audit},
    {8, "feasibility", feasibility},
    {9, "solver suite", solver_suite},
    {10, "determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  Corpus corpus;
  int failed = 0;
  for (const auto& c : kCriteria) {
    if (only && c.id != only) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run(corpus);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s criterion %2d %-25s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
